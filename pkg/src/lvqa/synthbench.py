"""Synthetic long-video QA benchmark with channel-coded events.

Each episode renders a handful of events as distinct feature signatures:
the event type elevates its signature channel across the whole frame for
the event's duration, while the event attribute is coded as a spatial
half/quadrant pattern on a secondary channel inside the same frames.  The
attribute is therefore invisible outside the event, which is what makes
grounded resampling measurably better than uniform sampling: at the
default budget, a global uniform grid misses most sparse events.

Instances stitch several episodes that share one attribute assignment, so
questions stay unambiguous while their evidence intervals multiply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (ConfigError, EmptyDatasetError, LabelError, ShapeError)
from .video import VideoTensor, read_frames, write_frames

QUESTION_TYPES = ("fluid", "motion", "instrument", "lighting", "phase_order")
SPARSE_TYPES = ("fluid", "motion", "instrument")

POLICY_LABELS = {
    "fluid": "gaussian",
    "motion": "gaussian",
    "lighting": "uniform",
    "instrument": "dense",
    "phase_order": "ushape",
}

ATTRIBUTES = {
    "fluid": ("suction", "irrigation"),
    "motion": ("forward", "backward"),
    "instrument": ("forceps", "snare"),
    "lighting": ("bright", "dim"),
    "phase_order": ("inspection", "resection"),
    "modality": ("standard", "narrowband"),
}

IN_TEMPLATES = {
    "fluid": ("what kind of fluid event occurs in the video",
              "which fluid event happens during the procedure",
              "identify the fluid event shown in the video"),
    "motion": ("what direction does the camera move in the video",
               "which way does the scope travel during the procedure",
               "what is the motion direction shown in the video"),
    "instrument": ("which instrument appears briefly in the video",
                   "what tool is used during the procedure",
                   "identify the instrument shown in the video"),
    "lighting": ("how is the lighting in the video",
                 "what is the overall illumination level of the procedure",
                 "describe the lighting condition shown in the video"),
    "phase_order": ("which phase occurs first in the video",
                    "what phase does the procedure begin with",
                    "identify the opening phase of the video"),
}

OUT_TEMPLATES = {
    "fluid": ("name the type of fluid activity that is present",
              "tell me what fluid related event takes place"),
    "motion": ("describe the direction of scope movement",
               "tell me which way the camera travels"),
    "instrument": ("name the surgical tool that appears",
                   "tell me which instrument becomes visible"),
    "lighting": ("tell me about the brightness of the scene",
                 "describe how bright the video appears overall"),
    "phase_order": ("tell me which phase comes first",
                    "name the phase that starts the procedure"),
}

ANSWER_TEMPLATES = {
    "fluid": "the fluid event is {attr}",
    "motion": "the camera moves {attr}",
    "instrument": "the visible instrument is the {attr}",
    "lighting": "the lighting is {attr}",
    "phase_order": "the {attr} phase occurs first",
}


def vocabulary_words() -> list[str]:
    """Every word the benchmark can emit, in deterministic order."""
    words: list[str] = []
    seen: set[str] = set()
    sources = []
    for qtype in QUESTION_TYPES:
        sources.extend(IN_TEMPLATES[qtype])
        sources.extend(OUT_TEMPLATES[qtype])
        for attr in ATTRIBUTES[qtype]:
            sources.append(ANSWER_TEMPLATES[qtype].format(attr=attr))
    for text in sources:
        for word in text.split():
            if word not in seen:
                seen.add(word)
                words.append(word)
    return words


@dataclass(frozen=True)
class GenSpec:
    """Generation parameters for episodes and stitched instances."""

    episode_frames: int = 68
    episodes_per_instance: int = 2
    fps: float = 4.0
    height: int = 16
    width: int = 16
    channels: int = 3
    event_amplitude: float = 2.0
    noise_std: float = 0.05
    fluid_frames: int = 5
    motion_frames: int = 5
    instrument_frames: int = 2
    phase_frames: int = 5
    patch_t: int = 2
    patch_s: int = 8

    def __post_init__(self):
        if self.channels < 3:
            raise ConfigError("need at least 3 channels for event signatures")
        if self.episode_frames % self.patch_t:
            raise ConfigError(f"episode_frames {self.episode_frames} not divisible "
                              f"by patch_t {self.patch_t}")
        if self.height % self.patch_s or self.width % self.patch_s:
            raise ConfigError("frame extents must divide the spatial patch size")
        for name, total in (("fluid_frames", self.fluid_frames),
                            ("motion_frames", self.motion_frames),
                            ("instrument_frames", self.instrument_frames),
                            ("phase_frames", 2 * self.phase_frames)):
            if getattr(self, name) < 1 or total > 0.15 * self.episode_frames:
                raise ConfigError(f"{name}={getattr(self, name)} exceeds 15% of "
                                  f"{self.episode_frames} frames per event type")


@dataclass(frozen=True)
class Event:
    kind: str                 # fluid | motion | instrument | phase
    start: int                # 1-based inclusive
    end: int
    attribute: str

    def shifted(self, offset: int) -> "Event":
        return replace(self, start=self.start + offset, end=self.end + offset)


@dataclass
class Episode:
    video: VideoTensor
    events: list[Event]
    lighting: str
    modality: str


@dataclass
class QAInstance:
    question: str
    qtype: str
    answer: str
    keywords: list[str]
    intervals: list[tuple[int, int]]
    policy: str
    template_id: str
    split: str                # in_template | out_of_template


@dataclass
class Instance:
    instance_id: str
    events: list[Event]
    lighting: str
    modality: str
    qas: list[QAInstance]
    video: VideoTensor | None = None
    frames_path: Path | None = None

    def load_video(self) -> VideoTensor:
        if self.video is None:
            self.video = read_frames(self.frames_path)
        return self.video


def derive_policy_label(qa: QAInstance) -> str:
    try:
        return POLICY_LABELS[qa.qtype]
    except KeyError:
        raise LabelError(f"no policy label for question type {qa.qtype!r}") from None


def _pick_attributes(rng: np.random.Generator) -> dict[str, str]:
    return {key: ATTRIBUTES[key][int(rng.integers(2))]
            for key in ("fluid", "motion", "instrument", "lighting",
                        "phase_order", "modality")}


def _place_events(rng: np.random.Generator, spec: GenSpec):
    """Non-overlapping event positions; phase markers bracket the episode."""
    t = spec.episode_frames
    phase_first = int(rng.integers(1, max(2, t // 3 - spec.phase_frames)))
    phase_second = int(rng.integers(2 * t // 3, t - spec.phase_frames + 2))
    taken = [(phase_first, phase_first + spec.phase_frames - 1),
             (phase_second, phase_second + spec.phase_frames - 1)]
    spans = {}
    for kind, frames in (("fluid", spec.fluid_frames),
                         ("motion", spec.motion_frames),
                         ("instrument", spec.instrument_frames)):
        for _ in range(1000):
            start = int(rng.integers(1, t - frames + 2))
            span = (start, start + frames - 1)
            if all(span[1] < lo or span[0] > hi for lo, hi in taken):
                taken.append(span)
                spans[kind] = span
                break
        else:
            raise ConfigError("could not place events without overlap")
    return spans, (phase_first, phase_first + spec.phase_frames - 1), \
        (phase_second, phase_second + spec.phase_frames - 1)


def generate_episode(seed, spec: GenSpec,
                     attributes: dict[str, str] | None = None) -> Episode:
    """Render one episode deterministically from its seed."""
    rng = np.random.default_rng(seed)
    attrs = attributes or _pick_attributes(rng)
    t, h, w = spec.episode_frames, spec.height, spec.width
    amp = spec.event_amplitude

    data = rng.normal(0.0, spec.noise_std, size=(spec.channels, t, h, w))
    data[0] += 1.0 if attrs["lighting"] == "bright" else 0.3
    if attrs["modality"] == "narrowband":
        data[0, :, :, ::2] += 0.2

    spans, phase_a, phase_b = _place_events(rng, spec)
    events: list[Event] = []

    # Event content codes: the event type fixes the channel-1 level, the
    # attribute fixes the channel-2 sign.  Codes are full-frame so that an
    # unordered token reader can still tell attributes apart.
    lo, hi = spans["fluid"]
    data[1, lo - 1:hi] += amp
    data[2, lo - 1:hi] += amp if attrs["fluid"] == "suction" else -amp
    events.append(Event("fluid", lo, hi, attrs["fluid"]))

    lo, hi = spans["motion"]
    data[1, lo - 1:hi] -= amp
    data[2, lo - 1:hi] += amp if attrs["motion"] == "forward" else -amp
    events.append(Event("motion", lo, hi, attrs["motion"]))

    lo, hi = spans["instrument"]
    data[1, lo - 1:hi] += 2.0 * amp
    data[2, lo - 1:hi] += 2.0 * amp if attrs["instrument"] == "forceps" else -2.0 * amp
    events.append(Event("instrument", lo, hi, attrs["instrument"]))

    first, second = attrs["phase_order"], [a for a in ATTRIBUTES["phase_order"]
                                           if a != attrs["phase_order"]][0]
    for (lo, hi), attr in ((phase_a, first), (phase_b, second)):
        data[1, lo - 1:hi] -= 2.0 * amp
        data[2, lo - 1:hi] += 2.0 * amp if attr == "inspection" else -2.0 * amp
        events.append(Event("phase", lo, hi, attr))

    events.sort(key=lambda e: e.start)
    return Episode(video=VideoTensor(data, spec.fps), events=events,
                   lighting=attrs["lighting"], modality=attrs["modality"])


def stitch_episodes(episodes: list[Episode]) -> tuple[VideoTensor, list[Event]]:
    """Concatenate episodes in order; event intervals shift by frame offsets."""
    if not episodes:
        raise ConfigError("cannot stitch zero episodes")
    first = episodes[0].video
    shape = first.data.shape
    for ep in episodes[1:]:
        other = ep.video.data.shape
        if (other[0], other[2], other[3]) != (shape[0], shape[2], shape[3]) \
                or ep.video.fps != first.fps:
            raise ShapeError(f"episode shape {other} (fps {ep.video.fps}) does not "
                             f"match {shape} (fps {first.fps})")
    data = np.concatenate([ep.video.data for ep in episodes], axis=1)
    events: list[Event] = []
    offset = 0
    for ep in episodes:
        events.extend(e.shifted(offset) for e in ep.events)
        offset += ep.video.frames
    return VideoTensor(data, first.fps), events


def oracle_answer(events: list[Event], lighting: str, qtype: str) -> tuple[str, list[str]]:
    """Ground-truth answer rendered from the event list (the metric ceiling)."""
    if qtype == "lighting":
        attr = lighting
    elif qtype == "phase_order":
        markers = [e for e in events if e.kind == "phase"]
        attr = min(markers, key=lambda e: e.start).attribute
    else:
        matching = [e for e in events if e.kind == qtype]
        if not matching:
            raise LabelError(f"no {qtype} event present")
        attr = matching[0].attribute
    return ANSWER_TEMPLATES[qtype].format(attr=attr), [attr]


def _intervals_for(events: list[Event], qtype: str, total_frames: int) -> list[tuple[int, int]]:
    if qtype == "lighting":
        return [(1, total_frames)]
    if qtype == "phase_order":
        markers = [e for e in events if e.kind == "phase"]
        first = min(markers, key=lambda e: e.start)
        return [(first.start, first.end)]
    return [(e.start, e.end) for e in events if e.kind == qtype]


def _make_qa(events: list[Event], lighting: str, qtype: str, template_idx: int,
             split: str, total_frames: int) -> QAInstance:
    bank = IN_TEMPLATES[qtype] if split == "in_template" else OUT_TEMPLATES[qtype]
    tag = "in" if split == "in_template" else "out"
    answer, keywords = oracle_answer(events, lighting, qtype)
    qa = QAInstance(question=bank[template_idx], qtype=qtype, answer=answer,
                    keywords=keywords,
                    intervals=_intervals_for(events, qtype, total_frames),
                    policy="", template_id=f"{qtype}_{tag}_{template_idx}",
                    split=split)
    qa.policy = derive_policy_label(qa)
    return qa


def build_instance(seed, spec: GenSpec, with_out_of_template: bool,
                   instance_id: str) -> Instance:
    """One stitched instance with a consistent attribute assignment."""
    rng = np.random.default_rng(seed)
    attributes = _pick_attributes(rng)
    episodes = [generate_episode([*_as_seed(seed), 17, i], spec, attributes)
                for i in range(spec.episodes_per_instance)]
    video, events = stitch_episodes(episodes)
    qas = []
    for qtype in QUESTION_TYPES:
        idx = int(rng.integers(len(IN_TEMPLATES[qtype])))
        qas.append(_make_qa(events, attributes["lighting"], qtype, idx,
                            "in_template", video.frames))
        if with_out_of_template:
            idx = int(rng.integers(len(OUT_TEMPLATES[qtype])))
            qas.append(_make_qa(events, attributes["lighting"], qtype, idx,
                                "out_of_template", video.frames))
    return Instance(instance_id=instance_id, events=events,
                    lighting=attributes["lighting"], modality=attributes["modality"],
                    qas=qas, video=video)


def _as_seed(seed) -> list[int]:
    return list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]


# dataset directory -----------------------------------------------------------

SPLITS = ("train", "val", "test")


def write_manifest(path: Path, entries: dict) -> None:
    with open(path, "w") as f:
        for key, value in entries.items():
            f.write(f"{key}={value}\n")


def read_manifest(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out


def _write_qa_file(path: Path, inst: Instance) -> None:
    lines = [f"lighting={inst.lighting}", f"modality={inst.modality}",
             f"n_events={len(inst.events)}"]
    for i, e in enumerate(inst.events):
        lines.append(f"event{i}={e.kind}:{e.start}:{e.end}:{e.attribute}")
    lines.append(f"n_qa={len(inst.qas)}")
    for i, qa in enumerate(inst.qas):
        lines.append(f"qa{i}.type={qa.qtype}")
        lines.append(f"qa{i}.question={qa.question}")
        lines.append(f"qa{i}.answer={qa.answer}")
        lines.append(f"qa{i}.keywords={'|'.join(qa.keywords)}")
        lines.append(f"qa{i}.intervals=" +
                     "|".join(f"{lo}:{hi}" for lo, hi in qa.intervals))
        lines.append(f"qa{i}.policy={qa.policy}")
        lines.append(f"qa{i}.template={qa.template_id}")
        lines.append(f"qa{i}.split={qa.split}")
    path.write_text("\n".join(lines) + "\n")


def _read_qa_file(path: Path) -> tuple[list[Event], str, str, list[QAInstance]]:
    kv = read_manifest(path)
    events = []
    for i in range(int(kv["n_events"])):
        kind, lo, hi, attr = kv[f"event{i}"].split(":")
        events.append(Event(kind, int(lo), int(hi), attr))
    qas = []
    for i in range(int(kv["n_qa"])):
        intervals = [tuple(int(x) for x in pair.split(":"))
                     for pair in kv[f"qa{i}.intervals"].split("|")]
        qas.append(QAInstance(question=kv[f"qa{i}.question"],
                              qtype=kv[f"qa{i}.type"],
                              answer=kv[f"qa{i}.answer"],
                              keywords=kv[f"qa{i}.keywords"].split("|"),
                              intervals=intervals,
                              policy=kv[f"qa{i}.policy"],
                              template_id=kv[f"qa{i}.template"],
                              split=kv[f"qa{i}.split"]))
    return events, kv["lighting"], kv["modality"], qas


def write_dataset(out_dir, spec: GenSpec, counts: dict[str, int], seed: int) -> None:
    """Generate and serialize a dataset; fully determined by the seed."""
    if sum(counts.values()) == 0 or counts.get("train", 0) == 0:
        raise EmptyDatasetError("dataset would contain no training instances")
    out_dir = Path(out_dir)
    manifest = {"seed": seed}
    for key, value in vars(spec).items():
        manifest[f"spec.{key}"] = value
    for split_idx, split in enumerate(SPLITS):
        n = counts.get(split, 0)
        manifest[f"count.{split}"] = n
        split_dir = out_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            name = f"inst_{i:05d}"
            inst = build_instance([seed, split_idx, i], spec,
                                  with_out_of_template=(split != "train"),
                                  instance_id=f"{split}/{name}")
            write_frames(split_dir / f"{name}.frames", inst.video)
            _write_qa_file(split_dir / f"{name}.qa", inst)
    write_manifest(out_dir / "manifest.txt", manifest)


def load_split(dataset_dir, split: str) -> list[Instance]:
    dataset_dir = Path(dataset_dir)
    manifest = read_manifest(dataset_dir / "manifest.txt")
    n = int(manifest[f"count.{split}"])
    out = []
    for i in range(n):
        name = f"inst_{i:05d}"
        qa_path = dataset_dir / split / f"{name}.qa"
        events, lighting, modality, qas = _read_qa_file(qa_path)
        out.append(Instance(instance_id=f"{split}/{name}", events=events,
                            lighting=lighting, modality=modality, qas=qas,
                            frames_path=dataset_dir / split / f"{name}.frames"))
    return out


def spec_from_manifest(manifest: dict[str, str]) -> GenSpec:
    kw = {}
    for key, value in manifest.items():
        if key.startswith("spec."):
            name = key[5:]
            anno = GenSpec.__dataclass_fields__[name].type
            kw[name] = float(value) if anno == "float" else int(value)
    return GenSpec(**kw)
