"""Synthetic motion-snippet generator.

Config-driven per-class templates: sinusoids plus offsets plus Gaussian
noise on the accel channels, a constant speed level, and optional
"transition" classes that mix two parent templates to produce a diffuse
class bridging them. Output is already in preprocessed range (accel
clamped to [-2, 2], speed in [0, ~1.5]).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bdisc.data import ACCEL_CLIP, Dataset, MotionSnippet, N_TIMESTEPS
from bdisc.errors import ValidationError
from bdisc.seeds import derive_seed

_T = np.arange(N_TIMESTEPS) / N_TIMESTEPS
_CHANNEL_LAG = np.pi / 3.0


@dataclass
class ClassTemplate:
    """Generator for one behavior class.

    ``accel_amp/freq/offset`` shape the three accel channels; ``speed`` is
    the mean of the speed channel. A template with ``mix=(a, b)`` instead
    interpolates freshly drawn clean signals of classes ``a`` and ``b``
    with a per-sample weight drawn from ``mix_range``.
    """

    name: str
    accel_amp: tuple = (0.0, 0.0, 0.0)
    accel_freq: tuple = (1.0, 1.0, 1.0)
    accel_offset: tuple = (0.0, 0.0, 0.0)
    speed: float = 0.0
    noise: float = 0.05
    noise_heavy: tuple = (0.0, 0.0)  # (fraction of samples, sigma) ambiguous tail
    amp_jitter: tuple = (1.0, 1.0)   # per-sample amplitude scale range
    freq_jitter: tuple = (1.0, 1.0)  # per-sample frequency scale range
    mix: tuple | None = None
    mix_range: tuple = (0.25, 0.75)


@dataclass
class SynthSpec:
    """Class index -> template map plus default per-class counts."""

    templates: dict[int, ClassTemplate]
    default_counts: dict[int, int] = field(default_factory=dict)

    def class_indices(self) -> list[int]:
        return sorted(self.templates)

    def class_names(self) -> dict[int, str]:
        return {c: t.name for c, t in self.templates.items()}


def _clean_signal(template: ClassTemplate, phase: float, amp_scale: float = 1.0,
                  freq_scale: float = 1.0) -> np.ndarray:
    """Noise-free (4, 20) signal for a non-mix template at a given phase."""
    values = np.zeros((4, N_TIMESTEPS))
    for ch in range(3):
        values[ch] = template.accel_offset[ch] + amp_scale * template.accel_amp[ch] * np.sin(
            2.0 * np.pi * freq_scale * template.accel_freq[ch] * _T + phase + ch * _CHANNEL_LAG
        )
    values[3] = template.speed
    return values


def _sample(spec: SynthSpec, template: ClassTemplate, rng) -> np.ndarray:
    if template.mix is None:
        amp_scale = rng.uniform(*template.amp_jitter)
        freq_scale = rng.uniform(*template.freq_jitter)
        clean = _clean_signal(template, rng.uniform(0.0, 2.0 * np.pi), amp_scale, freq_scale)
    else:
        a, b = template.mix
        lam = rng.uniform(*template.mix_range)
        clean_a = _clean_signal(spec.templates[a], rng.uniform(0.0, 2.0 * np.pi))
        clean_b = _clean_signal(spec.templates[b], rng.uniform(0.0, 2.0 * np.pi))
        clean = lam * clean_a + (1.0 - lam) * clean_b
    sigma = template.noise
    heavy_frac, heavy_sigma = template.noise_heavy
    if heavy_frac > 0.0 and rng.random() < heavy_frac:
        sigma = heavy_sigma
    values = clean + sigma * rng.standard_normal((4, N_TIMESTEPS))
    values[:3] = np.clip(values[:3], -ACCEL_CLIP, ACCEL_CLIP)
    values[3] = np.clip(values[3], 0.0, None)
    return values


def synth_generate(n_per_class, spec: SynthSpec, seed: int) -> Dataset:
    """Generate a labeled dataset with the given per-class counts.

    ``n_per_class`` is either a dict class index -> count or a sequence
    aligned with ``spec.class_indices()``. Deterministic for a fixed seed;
    each class draws from its own derived stream, so changing one count
    never perturbs another class's samples.
    """
    indices = spec.class_indices()
    if isinstance(n_per_class, dict):
        counts = {int(c): int(n) for c, n in n_per_class.items()}
    else:
        if len(n_per_class) != len(indices):
            raise ValidationError(
                f"expected {len(indices)} counts for classes {indices}, got {len(n_per_class)}"
            )
        counts = dict(zip(indices, (int(n) for n in n_per_class)))
    unknown = sorted(set(counts) - set(indices))
    if unknown:
        raise ValidationError(f"counts given for undeclared classes {unknown}")
    if any(n < 0 for n in counts.values()):
        raise ValidationError("per-class counts must be >= 0")

    snippets = []
    for cls in indices:
        n = counts.get(cls, 0)
        rng = np.random.default_rng(derive_seed(seed, "synth", cls))
        for j in range(n):
            snippets.append(
                MotionSnippet(f"c{cls:02d}_{j:05d}", _sample(spec, spec.templates[cls], rng), cls)
            )
    return Dataset(snippets, spec.class_names(), preprocessed=True)


def synth_stream(spec: SynthSpec, seed: int, n_windows: int, window_size: int,
                 novel_window: int | None = None):
    """Unlabeled stream segments for deployment runs.

    Windows draw uniformly from the classes with nonzero default counts;
    ``novel_window`` (if set) is filled entirely with the first declared
    zero-count template (the reserved unseen class). Returns
    ``(snippets, truth)`` where truth maps id -> generating class, for
    evaluation only.
    """
    known = [c for c in spec.class_indices() if spec.default_counts.get(c, 0) > 0]
    unseen = [c for c in spec.class_indices() if spec.default_counts.get(c, 0) == 0]
    if not known:
        raise ValidationError("stream needs at least one class with a nonzero default count")
    if novel_window is not None and not unseen:
        raise ValidationError("no reserved zero-count template for the novel window")

    snippets, truth = [], {}
    for w in range(n_windows):
        rng = np.random.default_rng(derive_seed(seed, "window", w))
        for j in range(window_size):
            if novel_window is not None and w == novel_window:
                cls = unseen[0]
            else:
                cls = known[rng.integers(0, len(known))]
            sid = f"w{w:03d}_{j:04d}"
            snippets.append(MotionSnippet(sid, _sample(spec, spec.templates[cls], rng), None))
            truth[sid] = cls
    return snippets, truth


def _compact(name, amp, freq, offset, speed, noise=0.04):
    return ClassTemplate(name, accel_amp=amp, accel_freq=freq, accel_offset=offset,
                         speed=speed, noise=noise)


def preset_spec(name: str) -> SynthSpec:
    """Built-in dataset presets.

    ``3class``  three compact classes, for fast smoke runs.
    ``5class``  four compact classes (one rare, 40:1 imbalance) plus a
                transition class (index 4) mixing classes 0 and 1.
    ``9class``  nine compact classes with the paper-style gap at index 7
                (indices 0-6, 8, 9) plus a reserved unseen template at
                index 10 used only for deployment streams.
    """
    if name == "3class":
        templates = {
            0: _compact("wingbeat", (1.2, 0.9, 0.7), (5, 5, 10), (0.0, 0.0, 0.3), 0.55),
            1: _compact("rest", (0.03, 0.03, 0.03), (1, 1, 1), (0.0, 0.1, 1.0), 0.02),
            2: _compact("walk", (0.5, 0.4, 0.6), (8, 8, 8), (0.1, 0.0, 0.9), 0.07),
        }
        counts = {0: 60, 1: 60, 2: 60}
    elif name == "5class":
        templates = {
            0: ClassTemplate("wingbeat", accel_amp=(1.2, 0.9, 0.7), accel_freq=(5, 5, 10),
                             accel_offset=(0.0, 0.0, 0.3), speed=0.55, noise=0.05,
                             amp_jitter=(0.9, 1.1), freq_jitter=(0.9, 1.1)),
            1: _compact("glide", (0.12, 0.1, 0.08), (2.5, 2.5, 2.5), (0.3, -0.3, 0.8), 1.45, noise=0.03),
            2: ClassTemplate("rest", accel_amp=(0.03, 0.03, 0.03), accel_freq=(1, 1, 1),
                             accel_offset=(0.0, 0.1, 1.0), speed=0.02, noise=0.02,
                             noise_heavy=(0.2, 0.5)),
            3: _compact("spike", (1.8, 1.8, 1.8), (10, 9, 11), (-0.6, 0.6, -0.3), 0.9, noise=0.03),
            4: ClassTemplate("shift", mix=(2, 0), mix_range=(0.2, 0.45), noise=0.06),
        }
        counts = {0: 480, 1: 120, 2: 120, 3: 12, 4: 30}
    elif name == "9class":
        templates = {
            0: _compact("wingbeat", (1.2, 0.9, 0.7), (5, 5, 10), (0.0, 0.0, 0.3), 0.55),
            1: _compact("burst", (1.6, 1.3, 1.0), (7, 7, 14), (0.0, 0.0, 0.2), 0.45),
            2: _compact("glide", (0.15, 0.1, 0.1), (1, 1, 1), (0.0, -0.2, 0.9), 0.8),
            3: _compact("drift", (0.1, 0.12, 0.08), (2, 2, 2), (-0.3, 0.2, 0.8), 0.3),
            4: _compact("bob", (0.25, 0.2, 0.3), (3, 3, 3), (0.0, 0.0, 1.0), 0.05),
            5: _compact("rest", (0.03, 0.03, 0.03), (1, 1, 1), (0.0, 0.1, 1.0), 0.02),
            6: _compact("walk", (0.5, 0.4, 0.6), (8, 8, 8), (0.1, 0.0, 0.9), 0.07),
            8: ClassTemplate("veer", mix=(0, 2), mix_range=(0.3, 0.7), noise=0.05),
            9: _compact("peck", (0.7, 0.3, 0.9), (10, 10, 5), (0.2, 0.0, 0.7), 0.03),
            10: _compact("unseen", (1.8, 1.8, 1.8), (12, 11, 13), (-0.6, 0.6, -0.4), 1.1),
        }
        counts = {0: 30, 1: 30, 2: 30, 3: 30, 4: 30, 5: 30, 6: 30, 8: 30, 9: 30, 10: 0}
    else:
        raise ValidationError(f"unknown preset {name!r} (expected 3class, 5class, or 9class)")
    return SynthSpec(templates, counts)


def load_spec(path) -> SynthSpec:
    """Load a SynthSpec from JSON (see README for the schema)."""
    raw = json.loads(Path(path).read_text())
    templates = {}
    for key, t in raw["templates"].items():
        mix = tuple(t["mix"]) if "mix" in t and t["mix"] is not None else None
        templates[int(key)] = ClassTemplate(
            name=t["name"],
            accel_amp=tuple(t.get("accel_amp", (0.0, 0.0, 0.0))),
            accel_freq=tuple(t.get("accel_freq", (1.0, 1.0, 1.0))),
            accel_offset=tuple(t.get("accel_offset", (0.0, 0.0, 0.0))),
            speed=float(t.get("speed", 0.0)),
            noise=float(t.get("noise", 0.05)),
            mix=mix,
            mix_range=tuple(t.get("mix_range", (0.25, 0.75))),
        )
    counts = {int(k): int(v) for k, v in raw.get("default_counts", {}).items()}
    return SynthSpec(templates, counts)


def resolve_spec(source: str) -> SynthSpec:
    """Accept a preset name or a path to a SynthSpec JSON file."""
    if source in ("3class", "5class", "9class"):
        return preset_spec(source)
    path = Path(source)
    if path.exists():
        return load_spec(path)
    raise ValidationError(f"unknown synth source {source!r}: not a preset and not a file")
