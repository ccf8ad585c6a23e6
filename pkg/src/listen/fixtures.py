"""Fixture datasets with the column layout of the three evaluation domains.

Values are synthetic (clearly labelled in metadata). Each fixture carries a
linear generator over min-max scaled features so the ground truth can be
re-derived and a scripted oracle can stand in for the decision maker.
"""

from __future__ import annotations

import numpy as np

from .model import AttributeSchema, Dataset, Item, feature_array, minmax_array

EXAM_PERSONA = "You are an expert university registrar choosing the better final-exam schedule."
FLIGHTS_PERSONA = "You are an expert travel scheduling agent that specializes in air fare."
HEADPHONES_PERSONA = "You are an audio equipment reviewer choosing the best headphones."

EXAM_METRICS = [
    ("conflicts", "students with two or more exams in the same slot"),
    ("quints", "students with five exams in consecutive slots"),
    ("quads", "students with four exams in consecutive slots"),
    ("four_in_five_slots", "students with four exams within five consecutive slots"),
    ("triple_in_24h", "students with three back-to-back exams within 24 hours"),
    ("triple_in_same_day", "students with three back-to-back exams on the same day"),
    ("triples", "sum of the two triple metrics"),
    ("three_in_four_slots", "students with three exams within four consecutive slots"),
    ("evening_morning_b2b", "exam in the last slot of a day and the first slot of the next"),
    ("other_b2b", "all other exams in adjacent slots"),
    ("back_to_backs", "sum of the two back-to-back metrics"),
    ("two_in_three_slots", "students with two exams within three consecutive slots"),
    ("avg_max", "average slot of each student's last exam"),
]


def _finish(name: str, schema: list[AttributeSchema], items: list[Item], persona: str, utterance: str,
            weights: dict[str, float], n_ranked: int, tie_group_size: int | None) -> Dataset:
    bare = Dataset(name=name, schema=tuple(schema), items=tuple(items))
    raw, layout = feature_array(bare, include_categorical=True)
    w = np.array([weights.get(k, 0.0) for k in layout])
    u = minmax_array(raw) @ w
    order = np.lexsort((np.arange(len(items)), -u))
    return Dataset(
        name=name, schema=tuple(schema), items=tuple(items), persona=persona, utterance=utterance,
        ground_truth=tuple(items[i].id for i in order[:n_ranked]), tie_group_size=tie_group_size,
        metadata={"synthetic": True, "note": "synthetic values in a real-world column layout",
                  "generator": {"kind": "linear", "feature_space": "minmax",
                                "true_weights": {k: float(v) for k, v in zip(layout, w)}}},
    )


def exam_fixture(n_items: int = 4938, n_ranked: int = 100, tie_group_size: int | None = 100,
                 seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    schema = [AttributeSchema(n, "numerical", "minimize", units="slot" if n == "avg_max" else "students",
                              description=d) for n, d in EXAM_METRICS]
    items = []
    for i in range(n_items):
        v = {
            "conflicts": float(rng.integers(0, 3)),
            "quints": float(rng.integers(0, 3)),
            "quads": float(rng.integers(0, 8)),
            "four_in_five_slots": float(rng.integers(0, 20)),
            "triple_in_24h": float(rng.integers(0, 60)),
            "triple_in_same_day": float(rng.integers(0, 40)),
            "three_in_four_slots": float(rng.integers(50, 400)),
            "evening_morning_b2b": float(rng.integers(50, 600)),
            "other_b2b": float(rng.integers(200, 1500)),
            "two_in_three_slots": float(rng.integers(500, 3000)),
            "avg_max": round(float(rng.uniform(10.0, 20.0)), 3),
        }
        v["triples"] = v["triple_in_24h"] + v["triple_in_same_day"]
        v["back_to_backs"] = v["evening_morning_b2b"] + v["other_b2b"]
        items.append(Item(f"sched{i:05d}", numerical=v))
    weights = {"conflicts": -1.0, "quints": -0.9, "quads": -0.8, "four_in_five_slots": -0.6,
               "triple_in_24h": -0.5, "triple_in_same_day": -0.5, "back_to_backs": -0.4,
               "avg_max": -0.2, "two_in_three_slots": -0.1, "three_in_four_slots": -0.1}
    utterance = ("Keep conflicts at 0 or 1. First minimize the exam clusters that force a reschedule "
                 "(quints, quads, four in five slots, triples), then the total back-to-back count, "
                 "then an early average last exam.")
    return _finish("exam-fixture", schema, items, EXAM_PERSONA, utterance, weights, n_ranked, tie_group_size)


def flights_fixture(n_items: int = 903, n_ranked: int = 20, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    airlines = ["American", "United", "Delta", "JetBlue", "Spirit"]
    origins, dests = ["ORD", "MDW"], ["JFK", "LGA", "EWR"]
    schema = [
        AttributeSchema("name", "categorical", description="name of airline operating the flight"),
        AttributeSchema("origin", "categorical", description="origin airport"),
        AttributeSchema("destination", "categorical", description="destination airport"),
        AttributeSchema("departure_time", "textual", description="time of departure from origin airport"),
        AttributeSchema("arrival_time", "textual", description="time of arrival at destination airport"),
        AttributeSchema("duration", "textual", description="how long the flight is"),
        AttributeSchema("stops", "numerical", "minimize", description="number of layover stops"),
        AttributeSchema("price", "numerical", "minimize", units="USD", description="cost of the flight"),
        AttributeSchema("dis_from_origin", "numerical", "minimize", units="miles",
                        description="distance of origin airport from where the customer prefers"),
        AttributeSchema("dis_from_dest", "numerical", "minimize", units="miles",
                        description="distance of arrival airport from where the customer prefers"),
        AttributeSchema("departure_seconds", "numerical", "maximize", units="s",
                        description="time of departure since a fixed date in seconds"),
        AttributeSchema("arrival_seconds", "numerical", "minimize", units="s",
                        description="time of arrival since a fixed date in seconds"),
        AttributeSchema("duration_min", "numerical", "minimize", units="min",
                        description="duration of total flight in minutes"),
    ]
    items = []
    for i in range(n_items):
        stops = int(rng.choice([0, 0, 1, 1, 2]))
        dep = int(rng.integers(0, 2 * 24 * 3600))
        dur = int(120 + 150 * stops + rng.integers(0, 90))
        origin, dest = str(rng.choice(origins)), str(rng.choice(dests))
        items.append(Item(
            f"fl{i:04d}",
            numerical={
                "stops": float(stops),
                "price": float(round(rng.uniform(90, 600) - 60 * stops, 2)),
                "dis_from_origin": 17.0 if origin == "ORD" else 11.0,
                "dis_from_dest": {"JFK": 15.0, "LGA": 9.0, "EWR": 16.0}[dest],
                "departure_seconds": float(dep),
                "arrival_seconds": float(dep + 60 * dur),
                "duration_min": float(dur),
            },
            categorical={"name": str(rng.choice(airlines)), "origin": origin, "destination": dest},
            textual={"departure_time": f"day {dep // 86400 + 1} {dep % 86400 // 3600:02d}:{dep % 3600 // 60:02d}",
                     "arrival_time": f"+{dur} min", "duration": f"{dur // 60} hr {dur % 60} min"},
        ))
    weights = {"stops": -0.8, "price": -0.6, "duration_min": -0.3, "dis_from_dest": -0.2,
               "departure_seconds": 0.1, "destination=EWR": -0.1}
    utterance = ("I prefer a direct flight under $400 that still lets me sleep well; "
                 "slight preference against Newark; no airline preference.")
    return _finish("flights-fixture", schema, items, FLIGHTS_PERSONA, utterance, weights, n_ranked, None)


def headphones_fixture(n_items: int = 77, n_ranked: int = 15, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    brands = ["Sony", "Bose", "Anker", "JBL", "Sennheiser", "Skullcandy"]
    schema = [
        AttributeSchema("product_name", "textual", description="name of the product"),
        AttributeSchema("brand", "textual", description="manufacturer"),
        AttributeSchema("price", "numerical", "minimize", units="USD", description="cost in dollars"),
        AttributeSchema("type", "categorical", description="headphone design"),
        AttributeSchema("connectivity", "categorical", description="wired vs wireless"),
        AttributeSchema("noise_cancellation", "categorical", description="active vs passive"),
        AttributeSchema("battery_life", "numerical", "maximize", units="hours", description="battery duration"),
        AttributeSchema("bluetooth_version", "numerical", "maximize", description="higher versions are newer"),
        AttributeSchema("driver_size", "numerical", "maximize", units="mm", description="audio driver diameter"),
        AttributeSchema("weight", "numerical", "minimize", units="oz", description="physical weight"),
        AttributeSchema("water_resistance", "textual", description="IPXX rating and qualitative notes"),
        AttributeSchema("microphone", "categorical", description="presence of built-in microphone"),
        AttributeSchema("review_rating", "numerical", "maximize", description="average customer rating"),
        AttributeSchema("review_count", "numerical", "maximize", description="number of reviews"),
        AttributeSchema("description", "textual", description="marketing text"),
    ]
    items = []
    for i in range(n_items):
        brand = str(rng.choice(brands))
        kind = str(rng.choice(["over-ear", "in-ear", "on-ear"]))
        items.append(Item(
            f"hp{i:03d}",
            numerical={
                "price": float(round(rng.uniform(20, 400), 2)),
                "battery_life": float(rng.integers(0, 61)),
                "bluetooth_version": float(rng.choice([4.2, 5.0, 5.2, 5.3])),
                "driver_size": float(rng.choice([10, 30, 40, 50])),
                "weight": float(round(rng.uniform(0.2, 12.0), 1)),
                "review_rating": float(round(rng.uniform(3.5, 4.9), 1)),
                "review_count": float(rng.integers(10, 60000)),
            },
            categorical={
                "type": kind,
                "connectivity": str(rng.choice(["wireless", "wired"])),
                "noise_cancellation": str(rng.choice(["active", "passive"])),
                "microphone": str(rng.choice(["yes", "no"])),
            },
            textual={"product_name": f"{brand} model {i}", "brand": brand,
                     "water_resistance": str(rng.choice(["none", "IPX4", "IP54"])),
                     "description": f"{kind} headphones by {brand}"},
        ))
    weights = {"type=over-ear": 0.8, "connectivity=wireless": 0.7, "noise_cancellation=active": 0.6,
               "microphone=yes": 0.5, "battery_life": 0.5, "weight": 0.2, "review_rating": 0.4,
               "review_count": 0.4}
    utterance = ("Over-ear, wireless, active noise cancellation and a microphone; long battery life; "
                 "a bit heavier is fine; many reviews with a high rating; price does not matter.")
    return _finish("headphones-fixture", schema, items, HEADPHONES_PERSONA, utterance, weights, n_ranked, None)
