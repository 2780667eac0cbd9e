"""Per-fold logistic-regression training time: wide one-hot rows vs 100-d concept rows."""

import argparse

from ehrvec.experiments import training_speed


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n-clusters", type=int, default=50, help="100 codes per cluster")
    p.add_argument("--n-patients", type=int, default=4000)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    out = training_speed(args.n_clusters, args.n_patients, args.dim, args.seed)
    (n, t_wide), (d, t_concept) = out["one_hot_counts"], out["concept_vector"]
    print(f"one-hot  {n:>6} features  {t_wide:.4f} s/fold")
    print(f"concept  {d:>6} features  {t_concept:.4f} s/fold")
    print(f"speed-up {t_wide / t_concept:.1f}x")


if __name__ == "__main__":
    main()
