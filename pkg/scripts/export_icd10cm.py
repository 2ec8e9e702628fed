"""Regenerate the shipped ICD-10-CM corpus files under data/.

Source: the CDC ICD-10-CM tabular list bundled with the ``simple_icd_10_cm``
package (``pip install simple_icd_10_cm``). That source carries only long
descriptions, so the short-description column of the order file is left blank.

Outputs:
    data/icd10cm_order.txt.gz   every category/subcategory code, order-file layout
    data/icd10cm_fixture.csv    the 14 reference codes of tests/fixtures/reference_cases.csv
                                plus seeded distractors, CSV layout
"""

from __future__ import annotations

import argparse
import csv
import gzip
import random
from pathlib import Path

import simple_icd_10_cm as cm

from icdrr.corpus import CODE_PATTERN, IcdEntry, normalize_code, to_csv, to_order_file

ROOT = Path(__file__).resolve().parents[1]


def all_entries() -> list[IcdEntry]:
    out = []
    seen = set()
    for code in cm.get_all_codes(with_dots=False):
        # a few categories are listed under two blocks
        if code in seen or not (cm.is_category(code) or cm.is_subcategory(code)):
            continue
        seen.add(code)
        # drops non-conforming placeholder codes (e.g. "QA0...")
        if not CODE_PATTERN.fullmatch(code):
            continue
        out.append(IcdEntry(normalize_code(code), cm.get_description(code), None, cm.is_leaf(code)))
    return out


def fixture_entries(entries: list[IcdEntry], n_random: int, seed: int) -> list[IcdEntry]:
    with open(ROOT / "tests" / "fixtures" / "reference_cases.csv", newline="", encoding="utf-8") as fh:
        reference = [row["reference_code"] for row in csv.DictReader(fh)]
    # hard distractors: every code sharing the first four characters with a reference code
    prefixes = {code[:4] for code in reference}
    chosen = {e.code.normalized for e in entries if e.code.normalized[:4] in prefixes}
    chosen.update(reference)
    rng = random.Random(seed)
    rest = [e.code.normalized for e in entries if e.code.normalized not in chosen]
    chosen.update(rng.sample(rest, n_random))
    return [e for e in entries if e.code.normalized in chosen]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--random-distractors", type=int, default=400)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    entries = all_entries()
    out = ROOT / "data"
    out.mkdir(exist_ok=True)
    with gzip.GzipFile(out / "icd10cm_order.txt.gz", "wb", mtime=0) as fh:
        fh.write(to_order_file(entries))
    fixture = fixture_entries(entries, args.random_distractors, args.seed)
    (out / "icd10cm_fixture.csv").write_bytes(to_csv(fixture))
    print(f"full table: {len(entries)} codes; fixture: {len(fixture)} codes")


if __name__ == "__main__":
    main()
