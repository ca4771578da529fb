"""BLEU scoring and the blinded human-evaluation workflow.

    python3 demos/05_scoring_and_human_eval.py
"""

import csv
import tempfile
from pathlib import Path

import numpy as np

from inkstone.evaluate import EvalItem, aggregate_sheets, bleu, make_eval_sheets


def main():
    print("== corpus BLEU with brevity penalty and smoothing ==")
    cands = [list("白日依山盡"), list("黃河入海流")]
    refs = [list("白日依山盡"), list("黃河入大海")]
    report = bleu(cands, refs, max_n=4)
    print(f"score {report.score:.2f}, precisions {['%.3f' % p if p is not None else None for p in report.precisions]}")
    print(f"brevity penalty {report.brevity_penalty:.4f} "
          f"(candidate {report.candidate_length} vs reference {report.reference_length} tokens)")
    print("json report:")
    print(report.to_json())

    print()
    print("== blinded sheets: evaluators never see which system produced a row ==")
    rng = np.random.default_rng(0)
    items = []
    for system, quality in [("baseline", 0.5), ("pretrained", 0.9)]:
        for i in range(12):
            items.append(EvalItem(system=system, task="AMCT", item_id=f"it{i:02d}",
                                  prompt=f"先帝創業未半第{i}句",
                                  output=f"出{i}" if rng.random() < quality else "亂"))
    with tempfile.TemporaryDirectory() as d:
        sheets, key = make_eval_sheets(items, num_evaluators=3, out_dir=d, seed=7)
        first = Path(sheets[0]).read_text(encoding="utf-8").splitlines()
        print("sheet_00.tsv starts with the rubric and a header:")
        for line in first[:6]:
            print(f"  {line}")
        print(f"key.tsv (not shown to evaluators) maps row ids back to systems")

        # play the evaluators: score 1 when the output is not the junk token
        for sheet in sheets:
            lines = Path(sheet).read_text(encoding="utf-8").splitlines()
            body = [ln for ln in lines if not ln.startswith("#")]
            rows = list(csv.DictReader(body, delimiter="\t"))
            for row in rows:
                good = "1" if row["output"] != "亂" else "0"
                row["fluency"], row["adequacy"] = good, good
            with open(sheet, "w", encoding="utf-8", newline="") as f:
                w = csv.DictWriter(f, fieldnames=rows[0].keys(), delimiter="\t")
                f.write("".join(ln + "\n" for ln in lines if ln.startswith("#")))
                w.writeheader()
                w.writerows(rows)

        agg = aggregate_sheets(sheets, key)
        print()
        print("aggregated means per (system, task):")
        for (system, task), cell in sorted(agg.cells.items()):
            print(f"  {system:10s} {task}: fluency {cell['fluency']:.3f}, "
                  f"adequacy {cell['adequacy']:.3f} over {cell['count']} judgments")
        for system, mean in sorted(agg.overall.items()):
            print(f"overall {system}: {mean:.2f}")


if __name__ == "__main__":
    main()
