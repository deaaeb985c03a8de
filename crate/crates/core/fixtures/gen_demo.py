#!/usr/bin/env python3
"""Generate the demo fixture corpus: a small synthetic embedding, a labeled
image manifest and placeholder PNG files.

Run from this directory: `python3 gen_demo.py`. Output is deterministic.
"""

import json
import os
import struct
import zlib

import numpy as np

DIM = 48
rng = np.random.default_rng(20240611)


def unit(v):
    return v / np.linalg.norm(v)


# Near-orthogonal latent directions.
basis_names = [
    "ergonomic", "comfort", "relaxed", "skillful", "modern", "vintage",
    "minimal", "bold", "elegant", "rugged",
    "furniture", "product", "building", "interior", "clothing", "material",
    "royal", "male", "female", "person",
]
q, _ = np.linalg.qr(rng.normal(size=(DIM, DIM)))
basis = {name: q[:, i] for i, name in enumerate(basis_names)}
spare = [q[:, i] for i in range(len(basis_names), DIM)]

adjectives = ["ergonomic", "comfortable", "relaxed", "skillful", "modern",
              "vintage", "minimal", "bold", "elegant", "rugged"]
adj_dir = {a: basis["comfort" if a == "comfortable" else a] for a in adjectives}

words = {}


def noise(scale):
    return rng.normal(size=DIM) * scale / np.sqrt(DIM)


# Axis words. ergonomic/comfortable share a component so the pair is "near".
words["ergonomic"] = unit(basis["ergonomic"] + noise(0.15))
words["comfortable"] = unit(0.48 * basis["ergonomic"] + 0.88 * basis["comfort"] + noise(0.1))
for a in adjectives:
    if a not in words:
        words[a] = unit(adj_dir[a] + noise(0.2))

field_words = {
    "industrial_design": ["chair", "sofa", "couch", "lamp", "lighting", "table", "desk",
                          "stool", "armrest", "cushion", "furniture", "gadget", "bottle",
                          "headphones", "keyboard", "handle", "product", "wooden"],
    "architecture": ["building", "facade", "house", "window", "roof", "concrete", "glass",
                     "tower", "bridge", "stairs", "courtyard", "skyscraper", "room",
                     "ceiling", "floor", "interior_design", "living_room"],
    "fashion": ["dress", "shirt", "jacket", "shoe", "sneaker", "textile", "fabric",
                "leather", "pattern", "sleeve", "collar", "handbag", "denim",
                "outerwear", "fashion_design", "model"],
}
field_dir = {
    "industrial_design": 0.7 * basis["furniture"] + 0.7 * basis["product"],
    "architecture": 0.7 * basis["building"] + 0.7 * basis["interior"],
    "fashion": basis["clothing"],
}
label_profile = {}
for field, names in field_words.items():
    for w in names:
        k = rng.choice(len(adjectives), size=2, replace=False)
        c = rng.uniform(0.2, 0.9, size=2)
        vec = field_dir[field] * 1.0 + noise(0.7)
        for idx, coef in zip(k, c):
            vec = vec + coef * adj_dir[adjectives[idx]]
        if w in ("wooden", "leather", "glass", "concrete", "fabric", "textile"):
            vec = vec + 0.8 * basis["material"]
        words[w] = unit(vec)
        label_profile[w] = field

# Hand-shaped neighbours.
words["lounge"] = unit(words["sofa"] + words["couch"] + words["relaxed"] + noise(0.2))
words["king"] = unit(basis["royal"] + basis["male"] + noise(0.15))
words["queen"] = unit(basis["royal"] + basis["female"] + noise(0.15))
words["man"] = unit(basis["person"] + basis["male"] + noise(0.15))
words["woman"] = unit(basis["person"] + basis["female"] + noise(0.15))

# Tokens the query updater must never emit.
words["3d"] = unit(words["product"] + words["modern"] + noise(0.3))
words["mid-century"] = unit(words["vintage"] + words["furniture"] + noise(0.3))
words["co2"] = unit(words["concrete"] + noise(0.5))
words["e.g."] = unit(words["comfortable"] + words["ergonomic"] + noise(0.4))

# Filler vocabulary.
for i in range(120):
    anchor = spare[i % len(spare)]
    words[f"filler{chr(97 + i // 26)}{chr(97 + i % 26)}"] = unit(anchor + noise(1.0))

vocab = list(words.keys())
with open("demo/embeddings.txt", "w", encoding="utf-8") as fh:
    fh.write(f"{len(vocab)} {DIM}\n")
    for w in vocab:
        fh.write(w + " " + " ".join(f"{x:.6f}" for x in words[w]) + "\n")

# Images.
phrase_labels = {
    "industrial_design": ["wooden chair", "floor lamp"],
    "architecture": ["interior design", "Living Room"],
    "fashion": ["fashion design", "leather jacket"],
}
shared = ["wooden", "glass", "leather", "fabric", "concrete"]
entries = []
os.makedirs("demo/images", exist_ok=True)


def png_bytes(rgb):
    width = height = 8
    raw = b"".join(b"\x00" + bytes(rgb) * width for _ in range(height))

    def chunk(kind, data):
        payload = kind + data
        return struct.pack(">I", len(data)) + payload + struct.pack(">I", zlib.crc32(payload) & 0xFFFFFFFF)

    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header)
            + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b""))


short = {"industrial_design": "id", "architecture": "ar", "fashion": "fa"}
for field, names in field_words.items():
    for n in range(30):
        image_id = f"{short[field]}-{n + 1:03d}"
        concept = field_dir[field] + noise(0.5)
        for a in rng.choice(len(adjectives), size=2, replace=False):
            concept = concept + rng.uniform(0.3, 1.2) * adj_dir[adjectives[a]]
        pool = list(dict.fromkeys(names + shared))
        sims = np.array([words[w] @ concept for w in pool])
        probs = np.exp(4.0 * sims)
        probs /= probs.sum()
        count = int(rng.integers(3, 8))
        chosen = list(rng.choice(pool, size=count, replace=False, p=probs))
        if n % 7 == 3:
            chosen[-1] = phrase_labels[field][n % 2]
        if n == 11:
            chosen[-1] = "unobtainium"
        scores = sorted(np.round(rng.uniform(0.55, 0.99, size=count), 2), reverse=True)
        if n == 5:
            scores[1] = scores[2]
        labels = [{"label": lab, "score": float(s)} for lab, s in zip(chosen, scores)]
        file = f"images/{image_id}.png"
        color = tuple(int(c) for c in rng.integers(40, 220, size=3))
        with open(os.path.join("demo", file), "wb") as fh:
            fh.write(png_bytes(color))
        entries.append({"id": image_id, "file": file, "field": field, "labels": labels})

with open("demo/manifest.json", "w", encoding="utf-8") as fh:
    json.dump({"version": "demo-1", "entries": entries}, fh, indent=1)
    fh.write("\n")

print(f"{len(vocab)} words, {len(entries)} images")
