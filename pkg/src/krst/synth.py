"""Synthetic relational video-QA benchmark.

Every sample is a small scene of K objects over T frames. Scenes are
laid out in a sub-window and then shifted by a random global offset, so
absolute coordinates carry no information about the answer; only the
objects' relative geometry does.

Task templates:

* ``frame_relpos`` (open-ended): "what is left of the cup" and so on;
  exactly one object lies on the asked side of the anchor.
* ``multichoice_relation``: the same question with five candidate
  answers appended one at a time.
* ``transition`` (multi-choice): one object changes category partway
  through the clip; "what does the cat turn into".
* ``action_count`` (count): the named object jumps on some frames while
  the others slide sideways; "how many times does the dog jump".
"""
import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .features import ObjectFeatureBank, box_from_corners

CATEGORIES = ("cat", "dog", "ball", "cup", "box", "car", "bird", "book", "lamp", "shoe")
DIRECTIONS = ("left", "right", "above", "below")
TEMPLATE_WORDS = ("<pad>", "what", "is", "of", "the", "does", "turn", "into", "how", "many", "times", "jump")
TASKS = ("frame_relpos", "transition", "action_count", "multichoice_relation")
TASK_HEAD = {
    "frame_relpos": "openended",
    "multichoice_relation": "multichoice",
    "transition": "multichoice",
    "action_count": "count",
}
SPLITS = ("train", "val", "test")
_SPLIT_CODE = {"train": 0, "val": 1, "test": 2}

WINDOW = 0.5
BOX_SIZE = 0.08
JUMP_HEIGHT = 0.06
JUMP_SPEED = 1.0


@dataclass
class SceneParams:
    T: int = 4
    K: int = 4
    n_categories: int = 8
    C: int = 64
    C_s: int = 64
    noise: float = 0.1
    min_gap: float = 0.06
    M: int = 5

    def validate(self, task):
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
        if self.T < 1 or self.K < 1:
            raise ConfigError(f"need T >= 1 and K >= 1, got T={self.T} K={self.K}")
        if not 2 <= self.n_categories <= len(CATEGORIES):
            raise ConfigError(f"n_categories must be in [2, {len(CATEGORIES)}]")
        if self.K > self.n_categories:
            raise ConfigError(f"K={self.K} objects need at least as many categories, have {self.n_categories}")
        if task in ("frame_relpos", "multichoice_relation") and self.K < 2:
            raise ConfigError("relation questions need K >= 2")
        if task == "transition" and self.T < 2:
            raise ConfigError("transition questions need T >= 2")
        if TASK_HEAD[task] == "multichoice" and not 2 <= self.M <= self.n_categories:
            raise ConfigError(f"M={self.M} candidates need 2 <= M <= n_categories")
        if self.noise < 0 or self.min_gap < 0 or self.min_gap * self.K > WINDOW:
            raise ConfigError("noise and min_gap must be nonnegative and the gaps must fit the layout window")
        return self


def vocabulary(params):
    cats = CATEGORIES[: params.n_categories]
    return list(TEMPLATE_WORDS) + list(DIRECTIONS) + list(cats)


def answer_vocabulary(params):
    return list(CATEGORIES[: params.n_categories])


def count_range(params):
    return (1, params.T)


# -- scenes ------------------------------------------------------------------


def _sorted_coords(rng, n, gap):
    """n increasing coordinates in [0, WINDOW] at least ``gap`` apart."""
    slack = WINDOW - gap * (n - 1)
    u = np.sort(rng.uniform(0.0, slack, size=n))
    return u + gap * np.arange(n)


def _static_frames(center, T, rng, jitter=0.004):
    centers = np.repeat(center[None], T, axis=0)
    return centers + rng.normal(0.0, jitter, size=centers.shape)


def make_scene(task, params, rng):
    """Relative layout of one scene, before the global offset.

    Returns a dict with per-frame categories (T, K), box centers (T, K, 2)
    in the layout window, velocities (T, K, 2) and the question pieces.
    """
    T_, K = params.T, params.K
    ncat = params.n_categories
    cats = rng.choice(ncat, size=K, replace=False)
    velocity = rng.normal(0.0, 0.05, size=(T_, K, 2))
    scene = {"task": task}
    if task in ("frame_relpos", "multichoice_relation"):
        direction = DIRECTIONS[rng.integers(len(DIRECTIONS))]
        axis = 0 if direction in ("left", "right") else 1
        coords = _sorted_coords(rng, K, params.min_gap)
        slots = rng.permutation(K)  # slots[r] = object holding rank r
        if direction in ("left", "above"):
            answer_obj, anchor_obj = slots[0], slots[1]
        else:
            answer_obj, anchor_obj = slots[K - 1], slots[K - 2]
        center = np.empty((K, 2))
        center[slots, axis] = coords
        center[:, 1 - axis] = rng.uniform(0.0, WINDOW, size=K)
        pos = _static_frames(center, T_, rng)
        # jitter must not reorder objects along the asked axis
        pos[:, :, axis] = np.repeat(center[None, :, axis], T_, axis=0)
        scene.update(direction=direction, anchor=int(anchor_obj), target=int(answer_obj))
        frame_cats = np.repeat(cats[None], T_, axis=0)
    elif task == "transition":
        center = np.column_stack([_sorted_coords(rng, K, params.min_gap)[rng.permutation(K)], rng.uniform(0, WINDOW, K)])
        pos = _static_frames(center, T_, rng)
        frame_cats = np.repeat(cats[None], T_, axis=0)
        changer = int(rng.integers(K))
        unused = np.setdiff1d(np.arange(ncat), cats)
        new_cat = int(rng.choice(unused)) if unused.size else int(cats[(changer + 1) % K])
        switch = int(rng.integers(1, T_))
        frame_cats[switch:, changer] = new_cat
        scene.update(changer=changer, switch=switch)
    else:  # action_count
        center = np.column_stack([_sorted_coords(rng, K, params.min_gap)[rng.permutation(K)], rng.uniform(JUMP_HEIGHT, WINDOW, K)])
        # the actor jumps (moves up); the others slide left on random frames
        moves = np.zeros((T_, K), dtype=bool)
        for k in range(K):
            n = int(rng.integers(0, T_ + 1))
            moves[rng.choice(T_, size=n, replace=False), k] = True
        actor = int(rng.integers(K))
        if not moves[:, actor].any():
            moves[rng.integers(T_), actor] = True
        jumps = np.zeros_like(moves)
        jumps[:, actor] = moves[:, actor]
        slides = moves & ~jumps
        pos = _static_frames(center, T_, rng)
        pos[:, :, 1] -= JUMP_HEIGHT * jumps
        pos[:, :, 0] -= JUMP_HEIGHT * slides
        velocity[:, :, 1] -= JUMP_SPEED * jumps
        velocity[:, :, 0] -= JUMP_SPEED * slides
        frame_cats = np.repeat(cats[None], T_, axis=0)
        scene.update(actor=actor, jumps=jumps.astype(int).tolist(), slides=slides.astype(int).tolist())
    scene.update(categories=frame_cats.astype(int).tolist(), centers=pos.tolist(), velocity=velocity.tolist())
    return scene


def translate(scene, offset):
    out = dict(scene)
    out["centers"] = (np.asarray(scene["centers"]) + np.asarray(offset)).tolist()
    out["offset"] = [float(o) for o in offset]
    return out


def random_offset(rng):
    # keeps every box inside [0, 1]
    lo = BOX_SIZE / 2 + JUMP_HEIGHT
    return rng.uniform(lo, 1.0 - WINDOW - BOX_SIZE / 2 - 0.02, size=2)


# -- ground truth ----------------------------------------------------------


def relation_answer(scene):
    """Brute-force: the one object strictly on the asked side of the anchor
    in the first frame."""
    centers = np.asarray(scene["centers"])[0]
    cats = scene["categories"][0]
    d = scene["direction"]
    axis = 0 if d in ("left", "right") else 1
    a = scene["anchor"]
    if d in ("left", "above"):
        hits = [k for k in range(len(cats)) if k != a and centers[k, axis] < centers[a, axis]]
    else:
        hits = [k for k in range(len(cats)) if k != a and centers[k, axis] > centers[a, axis]]
    if len(hits) != 1:
        raise ValueError(f"relation is ambiguous: {len(hits)} objects qualify")
    return cats[hits[0]]


def transition_answer(scene):
    cats = np.asarray(scene["categories"])
    changed = np.flatnonzero((cats != cats[0]).any(axis=0))
    if changed.size != 1:
        raise ValueError("transition scene must change exactly one object")
    k = changed[0]
    return int(cats[0, k]), int(cats[-1, k])


def count_answer(scene):
    """Frames on which the named actor moves upward at jump speed."""
    vy = np.asarray(scene["velocity"])[:, scene["actor"], 1]
    return int(np.sum(vy < -0.5 * JUMP_SPEED))


def question_tokens(scene):
    cats = scene["categories"][0]
    task = scene["task"]
    if task in ("frame_relpos", "multichoice_relation"):
        return ["what", "is", scene["direction"], "of", "the", CATEGORIES[cats[scene["anchor"]]]]
    if task == "transition":
        before, _ = transition_answer(scene)
        return ["what", "does", "the", CATEGORIES[before], "turn", "into"]
    return ["how", "many", "times", "does", "the", CATEGORIES[cats[scene["actor"]]], "jump"]


# -- feature realization ---------------------------------------------------------


class FeatureBasis:
    """Fixed random embeddings that turn scene facts into feature vectors."""

    def __init__(self, params, seed):
        rng = np.random.default_rng([seed, 99])
        n = params.n_categories
        self.cat_obj = rng.normal(0.0, 1.0, size=(n, params.C_s))
        self.cat_frame = rng.normal(0.0, 1.0, size=(n, params.C))
        self.vel_obj = rng.normal(0.0, 1.0, size=(2, params.C_s))
        self.vel_frame = rng.normal(0.0, 1.0, size=(2, params.C))
        self.pos_obj = rng.normal(0.0, 1.0, size=(2, params.C_s))


def realize(scene, params, basis, noise_seed):
    """Appearance and motion feature banks for one scene."""
    rng = np.random.default_rng(noise_seed)
    cats = np.asarray(scene["categories"])
    centers = np.asarray(scene["centers"])
    vel = np.asarray(scene["velocity"])
    T_, K = cats.shape
    half = BOX_SIZE / 2
    boxes = box_from_corners(
        centers[..., 0] - half, centers[..., 1] - half, centers[..., 0] + half, centers[..., 1] + half
    ).reshape(T_ * K, 6)
    flat_cats = cats.reshape(-1)
    s = params.noise
    app_obj = basis.cat_obj[flat_cats] + centers.reshape(-1, 2) @ basis.pos_obj
    app_obj += rng.normal(0.0, s, size=app_obj.shape)
    app_frame = basis.cat_frame[cats].mean(axis=1) + rng.normal(0.0, s, size=(T_, params.C))
    mot_obj = vel.reshape(-1, 2) @ basis.vel_obj + rng.normal(0.0, s, size=(T_ * K, params.C_s))
    mot_frame = vel.mean(axis=1) @ basis.vel_frame + rng.normal(0.0, s, size=(T_, params.C))
    return (
        ObjectFeatureBank(app_frame, app_obj, boxes, K, "appearance").validate(),
        ObjectFeatureBank(mot_frame, mot_obj, boxes.copy(), K, "motion").validate(),
    )


def build_sample(task, params, seed, split, index, offset_seed=None):
    """Scene, question and answer for one sample; all randomness derives
    from (seed, split, index)."""
    code = _SPLIT_CODE[split]
    layout_rng = np.random.default_rng([seed, code, index, 0])
    off_rng = np.random.default_rng([seed if offset_seed is None else offset_seed, code, index, 1])
    scene = translate(make_scene(task, params, layout_rng), random_offset(off_rng))
    q = question_tokens(scene)
    sample = {
        "id": f"{split}-{index:06d}",
        "video": f"{split}-{index:06d}",
        "task": task,
        "question": q,
        "noise_seed": [seed, code, index, 2],
        "scene": scene,
    }
    if task == "frame_relpos":
        sample["answer"] = CATEGORIES[relation_answer(scene)]
    elif task == "action_count":
        sample["answer"] = count_answer(scene)
    else:
        if task == "multichoice_relation":
            correct = relation_answer(scene)
            present = [c for c in set(scene["categories"][0]) if c != correct]
        else:
            before, correct = transition_answer(scene)
            present = [c for c in set(np.asarray(scene["categories"]).reshape(-1).tolist()) if c not in (correct,)]
        cand_rng = np.random.default_rng([seed, code, index, 3])
        present = sorted(present)
        cand_rng.shuffle(present)
        absent = [c for c in range(params.n_categories) if c != correct and c not in present]
        cand_rng.shuffle(absent)
        wrong = (present + absent)[: params.M - 1]
        slot = int(cand_rng.integers(params.M))
        options = wrong[:slot] + [correct] + wrong[slot:]
        sample["candidates"] = [CATEGORIES[c] for c in options]
        sample["answer"] = slot
    return sample


def generate_dataset(out_dir, task, n_train=2000, n_val=200, n_test=500, seed=0, params=None, offset_seed=None):
    """Write a dataset directory: ``dataset.json``, ``vocab.json``,
    ``<split>/samples.jsonl`` and feature directories
    ``features/<stream>/<video>/``."""
    params = (params or SceneParams()).validate(task)
    counts = {"train": n_train, "val": n_val, "test": n_test}
    for split, n in counts.items():
        if n < 1:
            raise ConfigError(f"n_{split} must be >= 1, got {n}")
    basis = FeatureBasis(params, seed)
    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "task": task,
        "head": TASK_HEAD[task],
        "seed": seed,
        "offset_seed": offset_seed,
        "splits": counts,
        "scene": asdict(params),
        "count_range": list(count_range(params)),
    }
    _write_json(os.path.join(out_dir, "dataset.json"), meta)
    _write_json(os.path.join(out_dir, "vocab.json"), {"tokens": vocabulary(params), "answers": answer_vocabulary(params)})
    for split, n in counts.items():
        lines = []
        for i in range(n):
            sample = build_sample(task, params, seed, split, i, offset_seed)
            app, mot = realize(sample["scene"], params, basis, sample["noise_seed"])
            app.save(os.path.join(out_dir, "features", "appearance", sample["video"]))
            mot.save(os.path.join(out_dir, "features", "motion", sample["video"]))
            lines.append(json.dumps(sample, sort_keys=True))
        os.makedirs(os.path.join(out_dir, split), exist_ok=True)
        with open(os.path.join(out_dir, split, "samples.jsonl"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return meta


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")
