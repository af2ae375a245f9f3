"""Regenerate the bundled miniF2F-style transition fixture.

Usage: python scripts/make_fixture.py src/divprove/data/minif2f_style.jsonl
"""
import sys

import numpy as np

from divprove.transitions import ErrorMessage, Subgoals, TransitionRecord, write_log

HYPS = ["x y : ℝ", "n : ℕ", "a b c : ℤ", "f : ℕ → ℕ", "x : ℝ\nh₀ : 0 < x"]
CONCLUSIONS = ["x + y = y + x", "n % 2 = 0 ∨ n % 2 = 1", "a * (b + c) = a * b + a * c",
               "f (n + 1) ≥ f n", "x ^ 2 ≥ 0", "Real.sqrt (x ^ 2) = |x|"]
TACTICS = ["simp", "linarith", "nlinarith [sq_nonneg x]", "ring", "norm_num", "omega",
           "intro h", "induction n with n ih", "rw [mul_add]", "positivity", "field_simp",
           "cases h₀", "exact le_refl _", "apply Nat.le_succ", "simp at *", "decide"]
ERRORS = [
    "linarith failed to find a contradiction\ncase a\nx y : ℝ\n⊢ False",
    "simp made no progress",
    "unknown identifier 'h'",
    "type mismatch\n  h₀\nhas type\n  0 < x : Prop\nbut is expected to have type\n  x = 0 : Prop",
    "ring failed, ring_nf subsidiary goal",
    "omega could not prove the goal",
]


def main(path, seed=20240101, n_goals=24, per_node=8):
    rng = np.random.default_rng(seed)
    records = []
    for g in range(n_goals):
        gid = f"mathd_algebra_{100 + g}"
        root = f"{HYPS[g % len(HYPS)]}\n⊢ {CONCLUSIONS[g % len(CONCLUSIONS)]}"
        frontier = [(root, "n0")]
        seen = {root}
        expanded = 0
        while frontier and expanded < 3:
            goal, node = frontier.pop(0)
            expanded += 1
            for t in rng.choice(TACTICS, size=per_node, replace=False):
                time_s = float(np.round(rng.gamma(2.0, 0.1), 4))
                if rng.random() < 0.25:
                    k = int(rng.integers(0, 3))
                    subs = tuple(f"{goal}\ncase h{j}" for j in range(k))
                    records.append(TransitionRecord(gid, goal, str(t), 1, time_s, Subgoals(subs),
                                                    node, f"{gid}/0"))
                    for s in subs:
                        if s not in seen:
                            seen.add(s)
                            frontier.append((s, f"n{len(seen) - 1}"))
                else:
                    msg = ERRORS[int(rng.integers(len(ERRORS)))]
                    records.append(TransitionRecord(gid, goal, str(t), 0, time_s, ErrorMessage(msg),
                                                    node, f"{gid}/0"))
    write_log(path, records)


if __name__ == "__main__":
    main(sys.argv[1])
