"""Synthetic fixture files in the exact on-disk formats the loaders parse.

The generators mimic the statistical character of the real datasets: gas
responses scale with an uncontrolled concentration spanning two decades
(with batch 7 drifted and noisier), forest spectra carry negative
difference features, and anuran MFCCs live in [-1, 1] with hierarchical
class structure and heavy class imbalance. All draws are seeded so a
fixture directory has identical contents in every session.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

GAS_SENSORS = 16
GAS_CLASSES = 6  # file ids 1..6
# Concentration grid (ppmv); cycled per class so every class spans the range.
GAS_CONCENTRATIONS = (10, 15, 20, 30, 50, 75, 100, 150, 200, 300, 500, 750, 1000)

FOREST_FEATURES = 27
FOREST_LETTERS = ("s", "h", "d", "o")

ANURAN_TAXA = {
    "AdenomeraAndre": ("Adenomera", "Leptodactylidae"),
    "AdenomeraHylaedactylus": ("Adenomera", "Leptodactylidae"),
    "Ameeregatrivittata": ("Ameerega", "Dendrobatidae"),
    "HylaMinuta": ("Dendropsophus", "Hylidae"),
    "HypsiboasCinerascens": ("Hypsiboas", "Hylidae"),
    "HypsiboasCordobae": ("Hypsiboas", "Hylidae"),
    "LeptodactylusFuscus": ("Leptodactylus", "Leptodactylidae"),
    "OsteocephalusOophagus": ("Osteocephalus", "Hylidae"),
    "Rhinellagranulosa": ("Rhinella", "Bufonidae"),
    "ScinaxRuber": ("Scinax", "Hylidae"),
}
ANURAN_COUNTS = {
    "AdenomeraAndre": 60,
    "AdenomeraHylaedactylus": 280,
    "Ameeregatrivittata": 45,
    "HylaMinuta": 65,
    "HypsiboasCinerascens": 75,
    "HypsiboasCordobae": 95,
    "LeptodactylusFuscus": 55,
    "OsteocephalusOophagus": 45,
    "Rhinellagranulosa": 35,
    "ScinaxRuber": 55,
}


def _gas_profiles(rng: np.random.Generator) -> np.ndarray:
    """Per-class sensor sensitivity profiles (gas, sensor).

    MOS arrays are broadly cross-sensitive: every sensor responds to every
    analyte, and identity lives in the ratio pattern across sensors. Gains
    are lognormal around ~12 with a several-fold spread.
    """
    profiles = np.minimum(
        np.exp(rng.normal(np.log(12.0), 0.35, size=(GAS_CLASSES, GAS_SENSORS))), 32.0)
    # Broadly cross-sensitive array: hold every analyte's overall response
    # energy to a common level so identity is carried by ratios alone.
    return profiles * (12.0 / profiles.mean(axis=1, keepdims=True))


def write_gas_drift(root, batch: int, per_class: int = 48, seed: int = 9021) -> Path:
    """Write ``batch<N>.dat`` in the attribute-indexed archive format."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    # Profiles are shared across batches (same sensor array); batch 7 sees
    # the array after drift: attenuated, perturbed, noisier.
    base = _gas_profiles(np.random.default_rng(seed))
    rng = np.random.default_rng(seed + batch)
    if batch == 1:
        profiles, sigma = base, 0.10
    else:
        attenuation = rng.uniform(0.30, 0.65, size=(1, GAS_SENSORS))
        perturb = rng.uniform(0.75, 1.30, size=base.shape)
        profiles, sigma = base * attenuation * perturb, 0.18
    # Fixed transient-shape factors for each sensor's remaining 7 features.
    shape = rng.uniform(-0.3, 0.4, size=(GAS_SENSORS, 7))

    lines = []
    for gas in range(GAS_CLASSES):
        for i in range(per_class):
            conc = GAS_CONCENTRATIONS[(i + gas) % len(GAS_CONCENTRATIONS)]
            noise = rng.lognormal(mean=0.0, sigma=sigma, size=GAS_SENSORS)
            peaks = conc * profiles[gas] * noise
            features = np.empty(128)
            features[0::8] = peaks
            for j in range(7):
                features[j + 1::8] = peaks * shape[:, j]
            tokens = " ".join(f"{k + 1}:{v:.6f}" for k, v in enumerate(features))
            lines.append(f"{gas + 1};{float(conc):.6f} {tokens}")
    order = rng.permutation(len(lines))
    path = root / f"batch{batch}.dat"
    path.write_text("\n".join(lines[i] for i in order) + "\n", encoding="utf-8")
    return path


def write_forest(root, per_class: int = 30, seed: int = 40312) -> Path:
    """Write training.csv / testing.csv in the forest-type CSV format."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    protos = np.empty((4, FOREST_FEATURES))
    protos[:, :9] = rng.uniform(30.0, 110.0, size=(4, 9))          # raw bands
    protos[:, 9:] = rng.uniform(-25.0, 25.0, size=(4, 18))         # model-minus-observed
    # hold per-class spectral energy to a common level (identity in shape)
    protos[:, :9] *= 70.0 / protos[:, :9].mean(axis=1, keepdims=True)
    header = ["class"] + [f"b{i}" for i in range(1, 10)] \
        + [f"pred_minus_obs_H_b{i}" for i in range(1, 10)] \
        + [f"pred_minus_obs_S_b{i}" for i in range(1, 10)]

    rows = []
    for ci, letter in enumerate(FOREST_LETTERS):
        for _ in range(per_class):
            # Illumination-like per-sample intensity variation on top of
            # feature noise; intensity normalization exists to remove it.
            intensity = rng.uniform(0.94, 1.08)
            values = intensity * protos[ci] + rng.normal(0.0, 5.0, size=FOREST_FEATURES)
            rows.append((letter, values))
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]
    split = int(0.55 * len(rows))
    for name, chunk in (("training.csv", rows[:split]), ("testing.csv", rows[split:])):
        lines = [",".join(header)]
        for letter, values in chunk:
            lines.append(letter + "," + ",".join(f"{v:.4f}" for v in values))
        (root / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root


def write_anuran(root, seed: int = 77814, counts: dict[str, int] | None = None) -> Path:
    """Write Frogs_MFCCs.csv with hierarchical class structure."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    counts = dict(ANURAN_COUNTS if counts is None else counts)

    families = sorted({fam for _, fam in ANURAN_TAXA.values()})
    genera = sorted({gen for gen, _ in ANURAN_TAXA.values()})
    fam_base = {f: rng.uniform(-0.4, 0.4, size=22) for f in families}
    gen_off = {g: rng.normal(0.0, 0.14, size=22) for g in genera}

    header = [f"MFCCs_{i:2d}" for i in range(1, 23)] + ["Family", "Genus", "Species", "RecordID"]
    lines = [",".join(header)]
    record = 1
    rows = []
    for species, (genus, family) in ANURAN_TAXA.items():
        proto = np.clip(fam_base[family] + gen_off[genus] + rng.normal(0.0, 0.17, size=22),
                        -0.85, 0.85)
        proto = (proto + 1.0) * (1.0 / (proto + 1.0).mean()) - 1.0
        for _ in range(counts[species]):
            # Loudness-like variation: scale the non-negative shifted form,
            # then store the pre-shift values the CSV format carries.
            loudness = rng.uniform(0.78, 1.15)
            jitter = rng.normal(0.0, 0.095, size=22)
            # mean-centered jitter: feature pattern varies, sample energy
            # stays tied to loudness alone
            shifted = loudness * (proto + 1.0) + (jitter - jitter.mean())
            values = np.clip(shifted - 1.0, -1.0, 1.0)
            rows.append((values, family, genus, species))
    order = rng.permutation(len(rows))
    for i in order:
        values, family, genus, species = rows[i]
        cells = [f"{v:.6f}" for v in values] + [family, genus, species, str(record)]
        lines.append(",".join(cells))
        record += 1
    path = root / "Frogs_MFCCs.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_all(root) -> Path:
    """Write every fixture dataset under one directory."""
    root = Path(root)
    write_gas_drift(root, batch=1, per_class=48)
    write_gas_drift(root, batch=7, per_class=56)
    write_forest(root)
    write_anuran(root)
    return root
