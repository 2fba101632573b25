"""Walk the corruption operators across severity levels, then score a small
hand-built response log with the failure taxonomy.

    python3 demos/corruption_and_metrics.py
"""

import numpy as np

from migate import corruption as corr
from migate import metrics as met

# A gradient test card so every operator has structure to chew on.
ramp = np.linspace(0, 255, 96, dtype=np.uint8)
card = corr.ImageBuffer(np.stack(np.broadcast_arrays(
    ramp[:, None], ramp[None, :], np.full((96, 96), 128, dtype=np.uint8)),
    axis=2).astype(np.uint8))

print("image corruption MSE by severity level")
print(f"{'kind':<10}" + "".join(f"{lv:>9}" for lv in range(1, 11)))
for kind in corr.IMAGE_KINDS:
    row = []
    for level in range(1, 11):
        seed = corr.sample_seed("demo-card", kind, level)
        out = corr.corrupt_image(card, kind, level, seed)
        row.append(np.mean((out.pixels.astype(float)
                            - card.pixels.astype(float)) ** 2))
    print(f"{kind:<10}" + "".join(f"{v:9.1f}" for v in row))

print()
sentence = "the quick brown fox jumps over the lazy dog"
print(f"text corruption of: {sentence!r}")
for op in corr.TEXT_KINDS:
    outcome = corr.corrupt_text(sentence, op, 3,
                                corr.sample_seed("demo-text", op, 3))
    print(f"  {op:<8} attempts={outcome.attempts} -> {outcome.result!r}")

# Fidelity loop: an oracle that rejects everything forces exclusion.
class RejectAll:
    def similarity(self, a, b):
        return 0.0

excluded = corr.corrupt_text(sentence, "replace", 5, seed=1,
                             oracle=RejectAll())
print(f"  hostile oracle: excluded={excluded.excluded} "
      f"after {excluded.attempts} attempts")

print()
print("failure taxonomy on a hand-built response log (ground truth 'yes')")
log = []
for fig, answers in (
        ("f1", {"no_image": "no", "manipulated": "no", "control": "yes"}),
        ("f2", {"no_image": "yes", "manipulated": "no", "control": "yes"}),
        ("f3", {"no_image": "yes", "manipulated": "yes", "control": "yes"}),
):
    for variant, predicted in answers.items():
        log.append(met.ResponseRecord(
            figure_id=fig, question_id=f"q-{fig}", category="VS",
            variant=variant, ground_truth="yes", prediction=predicted))
report = met.classify_errors(log)
print(f"  language-induced: {report.li}")
print(f"  vision-induced:   {report.vi}")
print(f"  mixed:            {report.mixed}")
print(f"  accuracy:         {report.accuracy:.3f}")
print(f"  consistency:      {report.consistency:.3f}")

print()
acc_clean, acc_corrupt = 29.77, 28.97
print(f"delta_p({acc_corrupt}, {acc_clean}) = "
      f"{100 * met.delta_p(acc_corrupt, acc_clean):+.2f} percentage points")
print(f"macro_average(2.48, 1.06, 4.43) = "
      f"{met.macro_average([2.48, 1.06, 4.43]):.4f}")
