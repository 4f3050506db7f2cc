"""Observed convergence order of the manufactured conduction problem."""

from penalized_nsf.manufactured import ManufacturedCase, observed_orders, run_manufactured


def main():
    case = ManufacturedCase()
    ns = (64, 128, 256)
    errors = [run_manufactured(n, n // 4, case) for n in ns]
    for n, e in zip(ns, errors):
        print(f"N={n:4d} L1 error {e:.3e}")
    print("orders: " + ", ".join(f"{o:.3f}" for o in observed_orders(errors)))


if __name__ == "__main__":
    main()
