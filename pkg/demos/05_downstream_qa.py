"""Export QA augmentation files and run zero-shot two-option evaluation.

Augmentation generates forward influences of the cause and reversed
influences of the ending, then renders both flattened graphs next to the
plain input. The exported JSONL carries everything an external classifier
trainer needs, including the loss weights alpha and beta.
"""

import json
import tempfile
from pathlib import Path

from stgraph import (
    GenerationConfig,
    QaItem,
    ZeroShotItem,
    augment,
    export_training_file,
    oracle_backend,
    train_ngram,
    zero_shot_eval,
)
from stgraph.backends import NGramBackend

context = "Wind creates waves. Waves wash on beaches. Beaches erode over time."
backend = oracle_backend({
    (context, "there is a storm", "helps", "imminent"): "stronger wind",
    (context, "there is a storm", "hurts", "imminent"): "calm weather",
    (context, "beaches erode faster", "helped_by", "imminent"): "bigger waves",
    (context, "beaches erode faster", "hurt_by", "imminent"): "sea walls",
})

item = QaItem(context, "there is a storm", "beaches erode faster", "helps",
              hop_count=3, question_type="exogenous")
augmented = augment(backend, item, GenerationConfig(seed=0))
print("input_main:", augmented.input_main)
print("input_aug: ", augmented.input_aug)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "train.jsonl"
    manifest = export_training_file([augmented], path)
    print("\nexport manifest:", manifest)
    print("exported line keys:", sorted(json.loads(path.read_text())))

print("\nzero-shot two-option picks with an n-gram scorer:")
pairs = [
    ("ice melts at higher temperatures </s> the summit gets hotter", "ice will decrease"),
    ("dams hold back river water </s> the river is dammed", "flow will decrease"),
]
scorer = NGramBackend(train_ngram(pairs * 5, n=3))
items = [
    ZeroShotItem("the summit gets hotter", ("ice will decrease", "ice will increase"),
                 "ice melts at higher temperatures", gold=1),
    ZeroShotItem("the river is dammed", ("flow will increase", "flow will decrease"),
                 "dams hold back river water", gold=2),
]
report = zero_shot_eval(scorer, items)
print(f"accuracy {report.accuracy:.2f} over {report.n_items} items "
      f"({report.n_ties} ties)")
for entry in report.per_item:
    print("  ", entry)
