"""Desk-scale ordering check: boosting vs logit accuracy, boosting vs CART and
profit-trained vs classification-trained boosting retention gain, over seeds.

Usage: python scripts/ordering_check.py [--seeds 10] [--n 50000] [--jobs 1] [--out results.json]
"""

import argparse
import json
import time
import warnings

from lapsekit import economics, evaluation, portfolio


def run_seed(seed: int, n: int, jobs: int) -> dict:
    ep = economics.load_paper_presets("aggressive")
    ds = portfolio.encode(portfolio.generate(portfolio.GeneratorConfig(n_policies=n, seed=seed)))
    out = {"seed": seed}
    for family in ("logit", "cart", "boost"):
        rep = evaluation.run_protocol(ds, family, None, [ep], seed=seed, jobs=jobs)
        s = rep.summary()
        out[family] = {"accuracy": s["accuracy"]["mean"], "rg": s["rg_aggressive"]["mean"]}
    rep = evaluation.run_profit_protocol(ds, ep, None, seed=seed, jobs=jobs)
    s = rep.summary()
    out["boost-profit"] = {"accuracy": s["accuracy"]["mean"], "rg": s["rg_aggressive"]["mean"]}
    return out


def orderings(rows: list[dict]) -> dict[str, int]:
    return {
        "boost_acc_ge_logit": sum(r["boost"]["accuracy"] >= r["logit"]["accuracy"] for r in rows),
        "boost_rg_ge_cart": sum(r["boost"]["rg"] >= r["cart"]["rg"] for r in rows),
        "profit_rg_ge_boost": sum(r["boost-profit"]["rg"] >= r["boost"]["rg"] for r in rows),
    }


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--n", type=int, default=50_000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    rows = []
    for seed in range(args.seeds):
        t0 = time.time()
        row = run_seed(seed, args.n, args.jobs)
        rows.append(row)
        print(
            f"seed {seed}: acc logit {row['logit']['accuracy']:.4f} boost {row['boost']['accuracy']:.4f} | "
            f"RG cart {row['cart']['rg']:.0f} boost {row['boost']['rg']:.0f} profit {row['boost-profit']['rg']:.0f} "
            f"({time.time() - t0:.0f}s)",
            flush=True,
        )
    counts = orderings(rows)
    print(json.dumps(counts))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"rows": rows, "counts": counts}, fh, indent=2)


if __name__ == "__main__":
    main()
