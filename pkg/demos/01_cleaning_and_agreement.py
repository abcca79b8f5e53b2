"""Cleaning a crowd-annotated corpus and measuring how much the raters agree."""

# %%
import tempfile
from pathlib import Path

from vadbnet.agreement import agreement_report, render_agreement
from vadbnet.dataset import clean_comments, clean_dataset, clean_scores, ingest_annotations
from vadbnet.synthetic import annotate, make_videos, write_dataset

# %% [markdown]
# One video's ratings: the 2 sits too far from the crowd and is dropped, the rest average to 6.6.

# %%
print(clean_scores([6, 6, 7, 7, 7, 2]))

# near-duplicate comments collapse to the first one seen
base = " ".join(f"w{i}" for i in range(23))
print(clean_comments(["soft evening light", base + " alpha", base + " beta"]))

# %% [markdown]
# A synthetic corpus: 20 clips, ten score raters and three tag raters each.
# Video v0003 keeps only four score raters, so its scores cannot be trusted.

# %%
videos = make_videos(20, seed=0, n_frames=4, size=16)
records = [r for r in annotate(videos, seed=0)
           if not (r.video_id == "v0003" and r.scores and int(r.annotator_id[1:]) >= 4)]
root = Path(tempfile.mkdtemp())
write_dataset(root, videos, records)

records, rejects = ingest_annotations(root / "annotations.jsonl")
cleaned = clean_dataset(records)
print(f"{len(records)} records read, {len(rejects)} rejected lines")
for x in cleaned.exclusions:
    print("excluded", x.video_id, x.scope, x.rule)
print(sum(e.score_valid for e in cleaned.entries), "videos keep their scores")

# %%
# ordinal Krippendorff alpha per dimension, on the surviving ratings
print(render_agreement(agreement_report(cleaned.records)))
