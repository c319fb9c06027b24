"""Print the approximate size of every built-in design space."""

from netspaces.sampler import DESIGN_SPACES, design_space_size


def main():
    print(f"{'design space':<26} {'size':>10}")
    for name, ds in DESIGN_SPACES.items():
        print(f"{name:<26} {design_space_size(ds):>10.2g}")


if __name__ == "__main__":
    main()
