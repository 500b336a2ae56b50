"""Bundled demo data and synthetic dataset generators.

The products table is the small demo relation used across docs and
tests; the generators build deterministic synthetic workloads for the
benchmark suites (oracle fuzzing, ordering/stealing ablations, scaling,
and a citation-style deduplication benchmark with ground truth).
"""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path
from typing import Optional, Union

PRODUCTS_HEADER = ["eid", "pno", "pname", "price", "sname", "description", "color", "saddress"]

PRODUCTS_ROWS = [
    [
        "e1",
        "t1",
        "Apple Mac Air",
        "$909",
        "Comp.  World",
        "Apple MacBook Air (13-inch, 8GB RAM, 256GB SSD)",
        "Gray",
        "9 Barton Grove, McCulloughmouth",
    ],
    [
        "e2",
        "t2",
        "ThinkPad",
        "-",
        "Smith's Tech",
        "ThinkPad E15, 15.6-inch full HD IPS display, Intel  Core  i5-1235U processor,  (16GB) RAM | 512GB PCIe SSD)",
        "Gray",
        "Seg Plaza, Hua qiang North Road",
    ],
    [
        "e2",
        "t3",
        "ThinkPad",
        "$849",
        "Smith's Tech",
        "Lenovo  E15 Business ThinkPad, 15.6-inch full HD  IPS  display, 12 generation Intel Core i5, 16GB RAM, 512GB SSD",
        "Gray",
        "Seg Plaza, Hua  qiang North Road",
    ],
    [
        "e1",
        "t4",
        "MacBook Air",
        "$909",
        "Comp.  World",
        "Apple 2022 MacBook  Air M2 chip 13-inch,8 GB RAM,256 GB SSD storage  gray",
        "Gray",
        "-",
    ],
    [
        "e1",
        "t5",
        "MacBook Air",
        "$909",
        "Comp.  World",
        "-",
        "Gray",
        "Barton Grove, McCulloughmouth",
    ],
]

PRODUCTS_RULES = [
    {
        "id": "phi1",
        "when": [
            {"t_attr": "color", "op": "eq", "s_attr": "color"},
            {"t_attr": "price", "op": "eq", "s_attr": "price"},
            {"t_attr": "sname", "op": "eq", "s_attr": "sname"},
            {"t_attr": "pname", "op": "sim", "s_attr": "pname", "measure": "edit", "threshold": 0.3},
        ],
    },
    {
        "id": "phi2",
        "when": [
            {"t_attr": "sname", "op": "eq", "s_attr": "sname"},
            {"t_attr": "description", "op": "sim", "s_attr": "description", "measure": "jaccard", "threshold": 0.4},
        ],
    },
    {
        "id": "phi3",
        "when": [
            {"t_attr": "saddress", "op": "sim", "s_attr": "saddress", "measure": "edit", "threshold": 0.75},
            {"t_attr": "description", "op": "sim", "s_attr": "description", "measure": "jaccard", "threshold": 0.4},
        ],
    },
]


def write_csv(path: Union[str, Path], header: list[str], rows: list[list[str]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_products(dirpath: Union[str, Path]) -> tuple[Path, Path]:
    """Write the demo products CSV and its rule file; returns both paths."""
    dirpath = Path(dirpath)
    data = write_csv(dirpath / "products.csv", PRODUCTS_HEADER, PRODUCTS_ROWS)
    rules = dirpath / "products_rules.json"
    rules.write_text(json.dumps(PRODUCTS_RULES, indent=2))
    return data, rules


# ---------------------------------------------------------------------------
# Random instances for oracle fuzzing

_WORDS = (
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima "
    "mike november oscar papa quebec romeo sierra tango uniform victor whiskey "
    "xray yankee zulu amber birch cedar dune ember flint grove harbor inlet"
).split()


def random_instance(seed: int) -> tuple[list[list[str]], list[dict]]:
    """A random (rows, rules) workload with mixed equality/similarity
    predicates, small alphabets (so matches exist), and missing cells."""
    rng = random.Random(seed)
    # Log-uniform sizes: plenty of small instances (the nested-loop
    # oracle is quadratic) while still covering the hundreds.
    n = int(20 * (400 / 20) ** rng.random())
    cat_alphabet = [f"c{i}" for i in range(rng.randint(3, 8))]
    header = ["cat", "num", "stext", "ltext"]

    def cell(maker) -> str:
        return "-" if rng.random() < 0.08 else maker()

    rows = []
    for _ in range(n):
        rows.append(
            [
                cell(lambda: rng.choice(cat_alphabet)),
                cell(lambda: str(rng.randint(0, 15))),
                cell(lambda: " ".join(rng.choices(_WORDS[:12], k=rng.randint(2, 4)))),
                cell(lambda: " ".join(rng.choices(_WORDS, k=rng.randint(6, 14)))),
            ]
        )

    pred_makers = [
        lambda: {"t_attr": "cat", "op": "eq", "s_attr": "cat"},
        lambda: {"t_attr": "num", "op": "eq", "s_attr": "num"},
        lambda: {"t_attr": "cat", "op": "eq", "const": rng.choice(cat_alphabet)},
        lambda: {
            "t_attr": rng.choice(["stext", "ltext"]),
            "op": "sim",
            "s_attr": None,
            "measure": "jaccard",
            "threshold": rng.choice([0.34, 0.5]),
        },
        lambda: {"t_attr": "stext", "op": "sim", "s_attr": "stext", "measure": "edit", "threshold": rng.choice([0.5, 0.7])},
        lambda: {"t_attr": "stext", "op": "sim", "s_attr": "stext", "measure": "exact_token", "threshold": 1.0},
    ]

    rules = []
    for r in range(rng.randint(1, 5)):
        preds = []
        seen = set()
        for _ in range(rng.randint(1, 3)):
            p = rng.choice(pred_makers)()
            if p.get("s_attr", "") is None:
                p["s_attr"] = p["t_attr"]
            key = json.dumps(p, sort_keys=True)
            if key in seen:
                continue
            seen.add(key)
            preds.append(p)
        rules.append({"id": f"r{r}", "when": preds})
    return rows, rules


# ---------------------------------------------------------------------------
# Ablation and scaling workloads


def ordering_workload(n: int = 1200, seed: int = 7) -> tuple[list[list[str]], list[dict]]:
    """One cheap, highly selective equality plus one expensive,
    rarely-failing similarity per rule; ordering decides everything."""
    rng = random.Random(seed)
    base = " ".join(rng.choices(_WORDS, k=24))
    rows = []
    for i in range(n):
        key = f"k{i}" if rng.random() > 0.01 else "k0"  # ~1% collisions
        text = _perturb_chars(base, rng, swaps=rng.randint(0, 6))
        rows.append([key, text])
    rules = [
        {
            "id": "r0",
            "when": [
                {"t_attr": "key", "op": "eq", "s_attr": "key"},
                {"t_attr": "text", "op": "sim", "s_attr": "text", "measure": "edit", "threshold": 0.6},
            ],
        }
    ]
    return rows, rules


def _perturb_chars(text: str, rng: random.Random, swaps: int) -> str:
    chars = list(text)
    for _ in range(swaps):
        i = rng.randrange(len(chars))
        chars[i] = rng.choice("abcdefghijklmnopqrstuvwxyz ")
    return "".join(chars)


def skewed_partition_workload(
    n: int = 50_000,
    n_t: int = 256,
    n_w: int = 1024,
    num_blocks: int = 2,
    heavy_intervals: int = 25,
    heavy_group_size: int = 16,
    heavy_text_len: int = 900,
    light_text_len: int = 24,
    seed: int = 11,
) -> tuple[list[list[str]], list[dict]]:
    """Adversarial per-tuple skew for the stealing ablation.

    The first ``heavy_intervals`` intervals statically assigned to block
    0 hold members of heavy groups: long texts that collide with their
    groupmates on the group key, forcing expensive edit comparisons.
    All other tuples are singletons with short texts, so without
    stealing, block 0 does essentially all the similarity work.
    """
    rng = random.Random(seed)
    n_intervals = -(-n // n_t)
    block0 = [iv for iv in range(n_intervals) if (iv % n_w) % num_blocks == 0]
    chosen = set(block0[:heavy_intervals])
    heavy_positions = [pos for pos in range(n) if pos // n_t in chosen]

    rows: list[Optional[list[str]]] = [None] * n
    base_heavy = "".join(rng.choices("abcdefghij ", k=heavy_text_len))
    group = -1
    for idx, pos in enumerate(heavy_positions):
        if idx % heavy_group_size == 0:
            group += 1
        text = _perturb_chars(base_heavy, rng, swaps=rng.randint(0, 8))
        rows[pos] = [f"g{group}", text]
    singleton = len(heavy_positions)
    for pos in range(n):
        if rows[pos] is None:
            singleton += 1
            rows[pos] = [f"u{singleton}", "".join(rng.choices("klmnopqrst ", k=light_text_len))]

    rules = [
        {
            "id": "r0",
            "when": [
                {"t_attr": "group", "op": "eq", "s_attr": "group"},
                {"t_attr": "text", "op": "sim", "s_attr": "text", "measure": "edit", "threshold": 0.55},
            ],
        }
    ]
    return rows, rules  # type: ignore[return-value]


def grouped_workload(
    n_groups: int = 2000,
    group_size: int = 50,
    text_len: int = 200,
    seed: int = 3,
    with_title_rule: bool = False,
    edit_threshold: float = 0.6,
    perturb_divisor: int = 20,
) -> tuple[list[list[str]], list[dict]]:
    """Group-keyed records with moderately long texts; the equality on
    the group key partitions cleanly and the in-group edit comparisons
    carry the compute load.  Lower ``perturb_divisor`` spreads in-group
    similarities wider (fewer matches, same comparisons).

    ``with_title_rule`` adds a distinct title column and a second rule
    rooted at a title jaccard, so partitioning includes a minhash-keyed
    branch with real hashing cost (exercises stage overlap).
    """
    rng = random.Random(seed)
    rows = []
    for g in range(n_groups):
        base = "".join(rng.choices("abcdefghijklmnop ", k=text_len))
        for m in range(group_size):
            row = [f"g{g}", _perturb_chars(base, rng, swaps=rng.randint(0, text_len // perturb_divisor))]
            if with_title_rule:
                row.append(" ".join(rng.sample(_TITLE_VOCAB, k=10)))
            rows.append(row)
    rng.shuffle(rows)
    rules = [
        {
            "id": "r0",
            "when": [
                {"t_attr": "group", "op": "eq", "s_attr": "group"},
                {"t_attr": "text", "op": "sim", "s_attr": "text", "measure": "edit", "threshold": edit_threshold},
            ],
        }
    ]
    if with_title_rule:
        rules.append(
            {
                "id": "r1",
                "when": [
                    {"t_attr": "title", "op": "sim", "s_attr": "title", "measure": "jaccard", "threshold": 0.9},
                ],
            }
        )
    return rows, rules


# ---------------------------------------------------------------------------
# Citation-style deduplication benchmark

_TITLE_VOCAB = [f"{w}{i}" for i in range(40) for w in ("data", "query", "graph", "index", "join", "stream",
                                                       "cache", "mining", "model", "learn", "rank", "view",
                                                       "tune", "plan", "scale", "store", "log", "lock",
                                                       "hash", "tree")]
_FIRST = ["alice", "bob", "carol", "david", "erin", "frank", "grace", "henry", "irene", "jack",
          "karen", "liam", "maria", "nolan", "olivia", "peter", "quinn", "rachel", "simon", "tara"]
_LAST = ["anders", "brown", "chen", "davis", "evans", "fischer", "garcia", "hansen", "ito", "jones",
         "kumar", "larsen", "meyer", "novak", "olsen", "patel", "quirk", "rossi", "schmidt", "tanaka"]
_VENUES = ["vldb", "sigmod", "icde", "edbt", "cidr", "kdd", "icml", "www", "cikm", "sdm"]


def citation_benchmark(
    n_tuples: int = 4591,
    n_matches: int = 2294,
    seed: int = 2024,
) -> tuple[list[list[str]], list[dict], set[tuple[int, int]]]:
    """A deterministic citation-deduplication workload: pairs of records
    describing the same paper with perturbed titles/authors, at the
    scale of the classic public citation benchmarks.  Returns (rows,
    rules, ground-truth pairs)."""
    rng = random.Random(seed)
    if 2 * n_matches > n_tuples:
        raise ValueError("need n_tuples >= 2 * n_matches")
    rows: list[list[str]] = []
    truth: set[tuple[int, int]] = set()

    def make_base() -> tuple[list[str], str, str]:
        title = rng.sample(_TITLE_VOCAB, k=rng.randint(6, 10))
        authors = ", ".join(f"{rng.choice(_FIRST)} {rng.choice(_LAST)}" for _ in range(rng.randint(1, 3)))
        year = str(rng.randint(1995, 2010))
        return title, authors, year

    for _ in range(n_matches):
        title, authors, year = make_base()
        venue = rng.choice(_VENUES)

        dup_title = title[:]
        roll = rng.random()
        if roll < 0.55:
            pass  # identical title
        elif roll < 0.90:
            dup_title = dup_title[:-1] if len(dup_title) > 6 else dup_title  # drop one word
        else:
            dup_title = dup_title[:-2] if len(dup_title) > 7 else dup_title[:-1]

        dup_authors = authors
        if rng.random() < 0.35:
            dup_authors = authors.replace(" ", "  ", 1) if rng.random() < 0.5 else (authors[:-1] or authors)
        dup_year = year if rng.random() < 0.96 else str(int(year) + 1)
        dup_venue = venue if rng.random() < 0.8 else rng.choice(_VENUES)

        a = len(rows)
        rows.append([f"m{a}", " ".join(title), authors, venue, year])
        b = len(rows)
        rows.append([f"m{a}", " ".join(dup_title), dup_authors, dup_venue, dup_year])
        truth.add((a, b))

    while len(rows) < n_tuples:
        title, authors, year = make_base()
        rows.append([f"s{len(rows)}", " ".join(title), authors, rng.choice(_VENUES), year])

    rules = [
        {
            "id": "title_year",
            "when": [
                {"t_attr": "year", "op": "eq", "s_attr": "year"},
                {"t_attr": "title", "op": "sim", "s_attr": "title", "measure": "jaccard", "threshold": 0.75},
            ],
        },
        {
            "id": "authors_title",
            "when": [
                {"t_attr": "authors", "op": "sim", "s_attr": "authors", "measure": "edit", "threshold": 0.8},
                {"t_attr": "title", "op": "sim", "s_attr": "title", "measure": "jaccard", "threshold": 0.5},
            ],
        },
    ]
    return rows, rules, truth


CITATION_HEADER = ["eid", "title", "authors", "venue", "year"]


def rows_to_relation(rows: list[list[str]], header: list[str], tmpdir: Union[str, Path], name: str = "data.csv"):
    """Write rows to CSV under tmpdir and load them back as a relation."""
    from ruleblock.relation import load_relation

    path = write_csv(Path(tmpdir) / name, header, rows)
    return load_relation(path)
