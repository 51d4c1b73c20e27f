"""Regenerate the synthetic coded-transcript fixtures under crates/core/data/analysis."""
import json
import random
from math import comb
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "crates/core/data/analysis"
AGENTS = 240
rng = random.Random(20250)


def ids(prefix, n):
    return [f"{prefix}{i:02d}" for i in range(1, n + 1)]


shared = ids("sh", 50)
local_common = ids("lc", 21)
local_rare = ids("lr", 20)
crowd_common = ids("cc", 11)
crowd_rare = ids("cr", 30)
shared_uncovered = ids("su", 4)
local_uncovered = ids("lu", 5)
crowd_uncovered = ids("cu", 5)
agent_only = ids("ao", 10)

carriers = {}
for c in shared + local_common + crowd_common:
    carriers[c] = rng.randint(60, 200)
for c in local_rare:
    carriers[c] = 6
for c in crowd_rare:
    carriers[c] = 15
for c in agent_only:
    carriers[c] = rng.randint(5, 60)

agent_codes = [[] for _ in range(AGENTS)]
for code, k in carriers.items():
    for t in rng.sample(range(AGENTS), k):
        agent_codes[t].append(code)

local_set = shared + local_common + local_rare + shared_uncovered + local_uncovered
crowd_set = shared + crowd_common + crowd_rare + shared_uncovered + crowd_uncovered


def humans(codes, n):
    out = [[] for _ in range(n)]
    for c in codes:
        for p in rng.sample(range(n), rng.randint(1, 3)):
            out[p].append(c)
    return out


local_codes = humans(local_set, 10)
crowd_codes = humans(crowd_set, 20)

groups = {
    "sh": "shared finding",
    "lc": "local finding",
    "lr": "rare local finding",
    "cc": "crowd finding",
    "cr": "rare crowd finding",
    "su": "unrecovered shared finding",
    "lu": "unrecovered local finding",
    "cu": "unrecovered crowd finding",
    "ao": "agent-only finding",
}
all_codes = (shared + local_common + local_rare + crowd_common + crowd_rare + shared_uncovered
             + local_uncovered + crowd_uncovered + agent_only)
with open(OUT / "coverage_codebook.jsonl", "w") as f:
    for c in all_codes:
        f.write(json.dumps({"code_id": c, "label": f"{groups[c[:2]]} {c[2:]}"}) + "\n")

with open(OUT / "coverage_coded.jsonl", "w") as f:
    for i, codes in enumerate(agent_codes):
        f.write(json.dumps({"id": f"agent-{i + 1:03d}", "study": "agentic", "codes": sorted(codes)}) + "\n")
    for i, codes in enumerate(local_codes):
        f.write(json.dumps({"id": f"local-{i + 1:02d}", "study": "local", "codes": sorted(codes)}) + "\n")
    for i, codes in enumerate(crowd_codes):
        f.write(json.dumps({"id": f"crowd-{i + 1:02d}", "study": "crowdsourced", "codes": sorted(codes)}) + "\n")


def expected(human):
    sizes = [1, 2, 4, 8, 16, 32, 64, 128, 240]
    out = []
    for n in sizes:
        total = 0.0
        for c in human:
            k = carriers.get(c, 0)
            total += 1 - comb(AGENTS - k, n) / comb(AGENTS, n)
        out.append(round(total / len(human), 4))
    return out


print("local", expected(local_set))
print("crowd", expected(crowd_set))

# Frequency table fixture: the ten codes with their published counts spread
# over 240 agent transcripts, repeats allowed.
table2 = [
    ("redundant-response", "Redundant response / repetition", 518),
    ("immersive-experience", "Immersive experience", 475),
    ("clear-goals", "Clear goals", 389),
    ("smooth-flow", "Smooth system flow", 376),
    ("appropriate-response", "Appropriate response", 307),
    ("off-topic", "Off topic", 8),
    ("information-overload", "Information overload", 7),
    ("over-freedom", "Unnecessary / over freedom", 5),
    ("lengthy-response", "Lengthy response", 2),
    ("low-fidelity-confusion", "Confused by the low-fidelity setting", 2),
]
with open(OUT / "frequency_codebook.jsonl", "w") as f:
    for cid, label, _ in table2:
        f.write(json.dumps({"code_id": cid, "label": label}) + "\n")
mentions = [[] for _ in range(AGENTS)]
for cid, _, count in table2:
    start = rng.randrange(AGENTS)
    for j in range(count):
        mentions[(start + j) % AGENTS].append(cid)
with open(OUT / "frequency_coded.jsonl", "w") as f:
    for i, codes in enumerate(mentions):
        f.write(json.dumps({"id": f"agent-{i + 1:03d}", "study": "agentic", "codes": sorted(codes)}) + "\n")
