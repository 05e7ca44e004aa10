"""Recompute the published summary numbers from the bundled count tables.

Prints content and face validity indices, difficulty from the reported means,
Fisher intervals for the reported correlations and the short-form selection,
each next to the published value.

    python scripts/reproduce_tables.py
"""
from taigha.assoc import fisher_ci
from taigha.instrument import table2_counts, table3_counts, table4_stats, taigha_catalog
from taigha.judge import JudgePanelRatings, assess_panel
from taigha.shortform import select_short_form

N = 385
CORRELATIONS = {"trust vs TIAS": 0.67, "distrust vs TIAS": -0.66, "trust vs propensity": 0.54}


def mark(got, want):
    return "ok" if got == want else "MISMATCH"


def main():
    rows = table2_counts()
    panel = JudgePanelRatings.from_counts({r["item"]: (r["not_relevant"], r["relevant"]) for r in rows})
    rep = assess_panel(panel, 0.8, (0.8, 0.8), "conservative_leq")
    print("Content validity (I-CVI)")
    for r in rows:
        got = round(rep.per_item_index[r["item"]], 2)
        note = f"  [{r['note']}]" if r["note"] else ""
        print(f"  {r['item']:<28} {got:.2f}  published {r['published']:.2f}  {mark(got, r['published'])}{note}")
    print(f"  retained {len(rep.retained)}: S-CVI/Ave {rep.scale_average:.2f}, S-CVI/UA {rep.universal_agreement:.2f}")

    rows = table3_counts()
    panel = JudgePanelRatings.from_counts({r["item"]: (r["not_clear"], r["clear"]) for r in rows}, "face_clarity")
    rep = assess_panel(panel)
    print("\nFace validity (I-FVI)")
    for r in rows:
        got = round(rep.per_item_index[r["item"]], 2)
        print(f"  {r['item']:<28} {got:.2f}  published {r['published']:.2f}  {mark(got, r['published'])}")
    print(f"  S-FVI/Ave {rep.scale_average:.2f}, S-FVI/UA {rep.universal_agreement:.2f}")

    cat = taigha_catalog()
    stats = table4_stats()
    print("\nItem difficulty (mean / 5)")
    for r in stats:
        got = round(r["mean"] / cat.get(r["item"]).scale_max, 2)
        print(f"  {r['item']:<12} mean {r['mean']:.2f} -> {got:.2f}  published {r['difficulty']:.2f}  "
              f"{mark(got, r['difficulty'])}")

    print(f"\nFisher 95% intervals at n = {N}")
    for name, r in CORRELATIONS.items():
        lo, hi = fisher_ci(r, N)
        print(f"  {name:<20} r = {r:+.2f}  [{lo:+.2f}, {hi:+.2f}]")

    itc = {r["item"]: r["itc"] for r in stats}
    sel = select_short_form(itc, cat.facets(), {"trust_1": 0.86, "trust_3": 0.88, "trust_4": 0.89})
    print(f"\nShort form: {', '.join(sel.items)}")


if __name__ == "__main__":
    main()
