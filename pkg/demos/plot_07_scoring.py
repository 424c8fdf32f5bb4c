"""
Macro-F1 reports
================

Per-class precision, recall and F1, with 0 wherever a ratio is 0/0.
"""

from offnet.data_eval import score

report = score(["OFF"] * 4, ["OFF", "OFF", "NOT", "NOT"], "A")
print(report.to_text())

golds = ["IND", "IND", "GRP", "OTH", "GRP", "IND"]
preds = ["IND", "GRP", "GRP", "IND", "GRP", "IND"]
report = score(preds, golds, "C")
print(report.to_text())
print(report.to_json())
