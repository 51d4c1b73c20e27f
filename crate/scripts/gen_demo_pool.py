"""Regenerate the synthetic 2,900-persona demo pool."""
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "crates/core/data/demo/pool/personas.jsonl"
N = 2900
rng = random.Random(2900)

occupations = [
    "nurse", "software tester", "high-school teacher", "line cook", "graphic designer", "accountant",
    "warehouse picker", "graduate student", "retired machinist", "veterinary technician", "bus driver",
    "librarian", "electrician", "barista", "civil engineer", "freelance translator", "paramedic",
    "sales associate", "data analyst", "carpenter", "museum guide", "pharmacist", "call-centre agent",
    "landscape gardener", "music producer", "postal worker", "dental hygienist", "security guard",
    "real-estate agent", "undergraduate in biology",
]
places = [
    "a small coastal town", "a busy capital city", "a farming village", "a university town",
    "a suburb outside a large city", "a mountain town", "an industrial port city", "a desert city",
    "a river valley town", "an island community",
]
habits = [
    "plays for an hour most evenings", "binges long sessions at weekends", "plays during the commute",
    "plays in short bursts between shifts", "joins a weekly online session with friends",
    "mostly watches streams and plays occasionally", "plays late at night to unwind",
]
genres = [
    "open-world adventures", "cozy farming sims", "soulslike action games", "competitive shooters",
    "story-rich role-playing games", "city builders", "fighting games", "puzzle platformers",
    "massively multiplayer online games", "roguelikes", "survival crafting games", "visual novels",
]
traits = [
    "likes to read every lore entry", "keeps detailed notes", "prefers playing with a partner",
    "chases every achievement", "enjoys helping newcomers in forums", "loves speedrunning boss fights",
    "gets attached to side characters", "rarely finishes a game before starting another",
    "enjoys min-maxing builds", "cares about a good soundtrack", "often roleplays a persona",
    "tends to rush the main quest", "likes quiet exploration more than combat",
    "enjoys trading and bartering systems",
]

with open(OUT, "w") as f:
    for i in range(1, N + 1):
        age = rng.randint(18, 67)
        g1, g2 = rng.sample(genres, 2)
        t1, t2 = rng.sample(traits, 2)
        text = (
            f"A {age}-year-old {rng.choice(occupations)} from {rng.choice(places)} who "
            f"{rng.choice(habits)}. Favourite genres are {g1} and {g2}. "
            f"This person {t1} and {t2}."
        )
        f.write(json.dumps({"profile_id": f"persona-{i:04d}", "persona_text": text}) + "\n")
