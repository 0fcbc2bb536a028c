"""Sampling the bubble inverse estimate for |f| f with affine f.

For affine ``f`` and ``g`` the ratio of the plain to the bubble-weighted L2
norm of ``|f| f + g`` is bounded on every triangle.  The script samples the
normalised family of affine fields, keeps the running maximum and compares
it with the classical constants for polynomials of degree 0, 1 and 2.

    python3 demos/inverse_estimate.py --samples 2000 --seed 0
"""
import argparse

from nsbf.invest import classical_bubble_constant, estimate_C_eq


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for k in (0, 1, 2):
        print(f"classical constant, degree {k}: {classical_bubble_constant(k):.6f}")
    est = estimate_C_eq(args.samples, args.seed)
    hist = est["history"]
    for n in sorted({1, 10, 100, 1000, len(hist)}):
        if n <= len(hist):
            print(f"running max after {n:6d} samples: {hist[n - 1]:.6f}")
    print(f"after local maximisation: {est['maxQ']:.9f} at a={est['argmax_a']}")


if __name__ == "__main__":
    main()
