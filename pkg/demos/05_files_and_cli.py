"""
Files and the command line
==========================

Datasets travel as CSV or a compact binary layout; fitted models as JSON
bound to the training file by a content hash. The same steps are available
from the ``spade`` command.
"""

import json
import tempfile
from pathlib import Path

from spade.cli import main
from spade.store import file_fingerprint, load_dataset, load_models

work = Path(tempfile.mkdtemp())
train, ids, ood = work / "train.bin", work / "id.bin", work / "ood.bin"

main(["synth", "--n-classes", "3", "--points-per-class", "100", "--seed", "7",
      "--out-train", str(train), "--out-id", str(ids), "--out-ood", str(ood)])
print(load_dataset(train).vectors.shape, file_fingerprint(train)[:16])

main(["fit", "--train", str(train), "--pairwise", "--out", str(work / "model.json")])
print("model fingerprint", load_models(work / "model.json").fingerprint[:16])

main(["eval", "--model", str(work / "model.json"), "--train", str(train),
      "--id-queries", str(ids), "--ood-queries", str(ood), "--out", str(work / "eval.json")])
print(json.loads((work / "eval.json").read_text()))

main(["adv-bound", "--model", str(work / "model.json"), "--lipschitz-k", "1",
      "--out", str(work / "bounds.csv")])
print((work / "bounds.csv").read_text())

# scoring against a different file is refused (exit status 3)
status = main(["score", "--model", str(work / "model.json"), "--train", str(ids),
               "--queries", str(ood), "--out", str(work / "scores.csv")])
print("exit status", status)
