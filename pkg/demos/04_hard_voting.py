"""
How the ensemble breaks ties
============================

Each member casts one vote.  A strict plurality wins outright.  When every
member disagrees, the strongest member decides.  When two labels tie, the
label backed by the best specialist for that label wins, and if that is
still level the global ranking settles it.
"""

from votestack.corpus import LabelSpace
from votestack.ensemble import EnsembleConfig, vote

labels = LabelSpace(("CLEAN", "OFFENSIVE", "HATE"))

# Members are listed strongest first.  per_label_f1 holds each member's
# validation F1 on every label (CLEAN, OFFENSIVE, HATE).
config = EnsembleConfig(
    members=("bert", "lstm", "cnn", "gru"),
    per_label_f1={
        "bert": (0.95, 0.60, 0.70),
        "lstm": (0.93, 0.55, 0.80),
        "cnn": (0.94, 0.66, 0.62),
        "gru": (0.92, 0.50, 0.58),
    },
)

cases = {
    "plain majority": (0, 0, 0, 2),
    "2-2 tie       ": (0, 2, 2, 0),
    "specialist tie": (1, 2, 2, 1),
}
for title, votes in cases.items():
    record = vote(dict(zip(config.members, votes)), config)
    shown = ", ".join(f"{m}={labels.name(v)}" for m, v in zip(config.members, votes))
    print(f"{title}: {shown}  =>  {labels.name(record.chosen)} ({record.resolution})")

# Four members over three labels always repeat a label.  With three members
# a complete split is possible, and the top-ranked member then decides.
three = EnsembleConfig(("cnn", "lstm", "gru"))
record = vote([2, 0, 1], three)
print("three-way split:", labels.name(record.chosen), f"({record.resolution})")
