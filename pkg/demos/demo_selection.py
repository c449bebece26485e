"""
Two-stage condition screening on a hand-built cohort
====================================================

Walks the prevalence filter and the information-gain ranking on a
small cohort where the arithmetic can be checked by eye.
"""

import numpy as np

from aok.core import ClinicalRecord, ConditionVocabulary, OcclusionLabel
from aok.selection import information_gain, prevalence_select

CO = OcclusionLabel.COMPLETE_OCCLUSION
PO = OcclusionLabel.PARTIAL_OCCLUSION

# 49 complete-occlusion cases, 28 of them hypertensive migraineurs,
# against 32 partial-occlusion cases with 19 hypertension / 14 migraine.
cohort = []
for i in range(49):
    conds = {"Hypertension", "Migraines"} if i < 28 else set()
    cohort.append((ClinicalRecord(case_id=f"A{i:03d}", conditions=frozenset(conds)), CO))
for i in range(32):
    conds = set()
    if i < 19:
        conds.add("Hypertension")
    if i < 14:
        conds.add("Migraines")
    cohort.append((ClinicalRecord(case_id=f"B{i:03d}", conditions=frozenset(conds)), PO))

report = prevalence_select(cohort, ConditionVocabulary.default())

print("condition         ratio_CO  ratio_PO  |diff|  stage1  stage2")
for e in report.entries:
    if e.ratio_co == 0.0 and e.ratio_po == 0.0:
        continue
    print(
        f"{e.condition:<17} {e.ratio_co:8.4f}  {e.ratio_po:8.4f}  "
        f"{e.abs_diff:6.4f}  {str(e.kept_stage1):<6}  {e.kept_stage2}"
    )
print("selected:", report.selected())

# The same gate on a continuous column: a perfectly separating feature
# carries one full bit, a flat one carries nothing.
labels = np.array([1, 1, 1, 0, 0, 0])
sep = np.array([2.0, 2.1, 2.2, 5.0, 5.1, 5.2])
flat = np.ones(6)
none = np.zeros(6, dtype=bool)
print("IG separating:", information_gain(sep, none, labels))
print("IG flat:      ", information_gain(flat, none, labels))
