"""End-to-end pipeline: odometry drift, pose-graph fusion, and feedback.

Runs a bundled scenario through the full pipeline and compares the
estimation modes (drifting dead reckoning, per-frame multi-view estimates,
gated/averaged variants, and the pose graph fusing odometry with sparse
absolute fixes). Then repeats the long scenario with and without the
static-waypoint pose-correction feedback to the robot's internal belief.

Run:  python3 demos/03_fusion_and_feedback.py
"""

from pathlib import Path

from camloc import procrustes_align, run_pipeline, translation_rmse
from camloc.scenario import load_config

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def rmse(result, mode):
    aligned, _ = procrustes_align(result.mode_trajectories[mode], result.ground_truth)
    return translation_rmse(aligned, result.ground_truth)


def main():
    config = load_config(SCENARIOS / "traj1.json", {"seed": 7})
    result = run_pipeline(config)
    print("traj1, seed 7 — aligned trajectory RMSE by mode:")
    for mode in ("robot", "raw", "gated_1frame", "averaged_5frames", "fused"):
        print(f"  {mode:<17} {100 * rmse(result, mode):6.2f} cm")
    print(f"  ({result.counters['solver_iterations']} LM iterations, "
          f"{result.counters['feedback_applications']} feedback corrections)")

    print("\nlong scenario, feedback on vs. off (robot-internal belief):")
    for seed in (11, 12, 13):
        on = run_pipeline(load_config(SCENARIOS / "long_feedback.json",
                                      {"seed": seed, "modes": '["robot","fused"]'}))
        off = run_pipeline(load_config(SCENARIOS / "long_feedback.json",
                                       {"seed": seed, "modes": '["robot"]',
                                        "feedback": "false"}))
        print(f"  seed {seed}: without {100 * rmse(off, 'robot'):5.1f} cm, "
              f"with {100 * rmse(on, 'robot'):5.1f} cm, "
              f"fused {100 * rmse(on, 'fused'):5.2f} cm")


if __name__ == "__main__":
    main()
