"""Budget allocation walkthrough.

Shows how a keyframe budget is spent across shots of very different lengths:
small budgets fund the longest shots first, larger budgets spread out
proportionally by largest remainder, and the per-shot cap stops any single
shot from hoarding. Coverage (the fraction of frames inside funded shots)
only ever grows with the budget, which is the accuracy side of the
time/accuracy trade-off.
"""

from keycap import Budget, allocate_budget, coverage_score
from keycap.shots import Shot


def main() -> None:
    lengths = [120, 60, 30, 12, 8]
    shots, start = [], 0
    for i, n in enumerate(lengths):
        shots.append(Shot(i, start, start + n - 1))
        start += n
    n_frames = start
    print(f"video: {n_frames} frames in {len(shots)} shots of lengths {lengths}\n")

    header = "k  " + "".join(f"shot{j} " for j in range(len(shots))) + " coverage"
    print(header)
    print("-" * len(header))
    for k in (1, 2, 3, 5, 8, 12, 20, 99):
        counts = allocate_budget(shots, Budget.count(k, per_shot_cap=4))
        coverage = coverage_score(shots, counts, n_frames)
        row = f"{k:<3d}" + "".join(f"{c:^6d}" for c in counts)
        print(f"{row}  {coverage:6.2f}")

    print("\nwith k below the shot count, only the longest shots are funded;")
    print("above it, the surplus follows shot length until the cap binds.")
    print("k=99 saturates at sum(min(length, cap)) =",
          sum(min(n, 4) for n in lengths), "keyframes.")


if __name__ == "__main__":
    main()
