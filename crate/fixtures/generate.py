#!/usr/bin/env python3
"""Regenerates the bundled fixtures.

Usage: python3 fixtures/generate.py [path/to/chaingrade]

Vote files are written first; gold files are then produced by running
`chaingrade aggregate` on them, and the scripted judge tables are derived from
that gold. vote30_expected.txt is written by hand and is not touched here.
"""

import json
import random
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
BIN = Path(sys.argv[1]) if len(sys.argv) > 1 else HERE.parent / "target" / "debug" / "chaingrade"
RATERS = ["a1", "a2", "a3"]

DOMAINS = {
    "StepType": ["Description", "Reasoning", "Both"],
    "DescCorrectness": ["FullyCorrect", "PartiallyCorrect", "Unsupported"],
    "DescRelevance": ["ImageRelevant", "LogicRelevant", "Both", "None"],
    "DescErrorType": ["EntityFalse", "AttributeFalse", "SpatialRelFalse", "NonSpatialRelFalse"],
    "LogicCorrectness": ["Correct", "Incorrect"],
    "LogicRelevance": ["Relevant", "Irrelevant"],
    "Informativeness": ["Informative", "Uninformative"],
    "LogicErrorType": ["InterStep", "IntraStep", "Both"],
    "McotCorrectness": ["Correct", "Incorrect"],
    "PredictionCorrectness": ["Correct", "Incorrect"],
}
DISPLAY = {
    "FullyCorrect": "Fully Correct",
    "PartiallyCorrect": "Partially Correct",
    "ImageRelevant": "Image Relevant",
    "LogicRelevant": "Logic Relevant",
    "EntityFalse": "Entity False",
    "AttributeFalse": "Attribute False",
    "SpatialRelFalse": "Spatial Relationship False",
    "NonSpatialRelFalse": "Non-spatial Relationship False",
    "InterStep": "Inter-step Incorrect",
    "IntraStep": "Intra-step Incorrect",
}
STEP_TASKS = [t for t in DOMAINS if t not in ("McotCorrectness", "PredictionCorrectness")]
DIMENSIONS = ["d_correct", "d_relevant", "l_correct", "l_relevant", "info"]


def write_jsonl(path, rows):
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path):
    return [json.loads(line) for line in open(path) if line.strip()]


def record(rid, split, question_id, steps, annotations, image="no-image"):
    return {
        "id": rid,
        "split": split,
        "source_dataset": "synthetic",
        "question_id": question_id,
        "image_ref": image,
        "question": f"Question {question_id}: what does the picture show?",
        "steps": [{"index": i + 1, "text": t} for i, t in enumerate(steps)],
        "generator": "fixture",
        "annotations": annotations,
    }


def vote(annotator, step, task, label):
    return {"annotator_id": annotator, "step_index": step, "task": task, "label": label}


# ---------------------------------------------------------------------------
# Intended step labels and votes for generated datasets


def good_step(rng, step_type):
    labels = {"StepType": step_type}
    if step_type in ("Description", "Both"):
        labels["DescCorrectness"] = "FullyCorrect"
        labels["DescRelevance"] = rng.choice(["ImageRelevant", "LogicRelevant", "Both"])
    if step_type in ("Reasoning", "Both"):
        labels.update(LogicCorrectness="Correct", LogicRelevance="Relevant", Informativeness="Informative")
    return labels


def spoil(rng, labels):
    """Makes a good step bad in one of the ways the taxonomy allows."""
    options = []
    if "DescCorrectness" in labels:
        options += ["desc-correctness", "desc-relevance"]
    if "LogicCorrectness" in labels:
        options += ["logic-correctness", "logic-relevance", "info"]
    kind = rng.choice(options)
    if kind == "desc-correctness":
        labels["DescCorrectness"] = rng.choice(["PartiallyCorrect", "Unsupported"])
        labels["DescErrorType"] = rng.choice(DOMAINS["DescErrorType"])
    elif kind == "desc-relevance":
        labels["DescRelevance"] = "None"
    elif kind == "logic-correctness":
        labels["LogicCorrectness"] = "Incorrect"
        labels["LogicErrorType"] = rng.choice(DOMAINS["LogicErrorType"])
    elif kind == "logic-relevance":
        labels["LogicRelevance"] = "Irrelevant"
    else:
        labels["Informativeness"] = "Uninformative"


def other(rng, task, label):
    return rng.choice([x for x in DOMAINS[task] if x != label])


def step_votes(rng, step, labels, split_type):
    """Votes consistent with `labels` as the majority outcome.

    With `split_type`, rater a3 dissents on the type and follows its own path;
    the two majority raters then agree on everything.
    """
    out = []
    step_type = labels["StepType"]
    dissent_type = other(rng, "StepType", step_type) if split_type else None
    for r in RATERS:
        out.append(vote(r, step, "StepType", dissent_type if (split_type and r == "a3") else step_type))

    def tasks_for(t):
        tasks = []
        if t in ("Description", "Both"):
            tasks += ["DescCorrectness", "DescRelevance"]
        if t in ("Reasoning", "Both"):
            tasks += ["LogicCorrectness", "LogicRelevance", "Informativeness"]
        return tasks

    # one optional 2:1 dissent on a plain task when all three share the type
    dissent_task = None
    if not split_type and rng.random() < 0.4:
        dissent_task = rng.choice(tasks_for(step_type))
    given = {}
    for r in RATERS:
        t = dissent_type if (split_type and r == "a3") else step_type
        for task in tasks_for(t):
            if task in labels and not (split_type and r == "a3"):
                label = labels[task]
                if task == dissent_task and r == "a3":
                    label = other(rng, task, label)
            else:
                label = rng.choice(DOMAINS[task])
            given[(r, task)] = label
            out.append(vote(r, step, task, label))
    for err, gate, bad in (
        ("DescErrorType", "DescCorrectness", lambda x: x != "FullyCorrect"),
        ("LogicErrorType", "LogicCorrectness", lambda x: x == "Incorrect"),
    ):
        triggered = [r for r in RATERS if (r, gate) in given and bad(given[(r, gate)])]
        for r in triggered:
            if err in labels and not (split_type and r == "a3"):
                label = labels[err]
            else:
                label = rng.choice(DOMAINS[err])
            out.append(vote(r, step, err, label))
    return out


def chain_votes(rng, correct):
    verdict = "Correct" if correct else "Incorrect"
    pred = rng.choice(["Correct", "Incorrect"])
    out = [vote(r, 0, "McotCorrectness", verdict) for r in RATERS]
    out += [vote(r, 0, "PredictionCorrectness", pred) for r in RATERS]
    return out


def generated_record(rng, rid, split, qid, correct, n_steps, image, allow_split=True):
    types = [rng.choice(["Description", "Reasoning", "Reasoning", "Both"]) for _ in range(n_steps)]
    labels = [good_step(rng, t) for t in types]
    if not correct:
        for i in rng.sample(range(n_steps), k=rng.choice([1, min(2, n_steps)])):
            spoil(rng, labels[i])
    max_split = (n_steps - 1) // 2 if allow_split else 0
    split_steps = set(rng.sample(range(n_steps), k=min(max_split, 1 if rng.random() < 0.5 else 0)))
    anns = []
    for i, l in enumerate(labels):
        anns += step_votes(rng, i + 1, l, i in split_steps)
    anns += chain_votes(rng, correct)
    steps = [f"Step {i + 1} of {rid}: {t.lower()} content." for i, t in enumerate(types)]
    return record(rid, split, qid, steps, anns, image)


def aggregate(votes_path, gold_path):
    subprocess.run([str(BIN), "aggregate", str(votes_path), "-o", str(gold_path), "--summary", "/dev/null"], check=True)


def mcot20(rng):
    sizes = {"Hard": [("q01", 3), ("q02", 3), ("q03", 2), ("q04", 2)], "Normal": [("q05", 3), ("q06", 3), ("q07", 2), ("q08", 2)]}
    records = []
    n = 0
    for split, groups in sizes.items():
        for qid, size in groups:
            if qid == "q04":
                verdicts = [False] * size
            elif qid == "q08":
                verdicts = [True] * size
            else:
                verdicts = [True] + [False] * (size - 1)
                if size == 3 and qid in ("q02", "q06"):
                    verdicts = [True, True, False]
            for correct in verdicts:
                n += 1
                image = "no-image" if n % 7 == 0 else f"images/mcot20_{n:02d}.png"
                records.append(generated_record(rng, f"mcot20-{n:02d}", split, qid, correct, rng.randint(2, 4), image))
    return records


def ranking(rng):
    sizes = [4, 3, 3, 3, 3, 3, 3, 3, 3, 3]
    records = []
    n = 0
    for q, size in enumerate(sizes, start=1):
        split = "Hard" if q <= 5 else "Normal"
        if q == 9:
            verdicts = [True] * size
        elif q == 10:
            verdicts = [False] * size
        else:
            k = rng.randint(1, size - 1)
            verdicts = [True] * k + [False] * (size - k)
            rng.shuffle(verdicts)
        for correct in verdicts:
            n += 1
            records.append(generated_record(rng, f"rank-{n:02d}", split, f"rq{q:02d}", correct, rng.randint(1, 3), "no-image", allow_split=False))
    return records


# ---------------------------------------------------------------------------
# Scripted judge tables


def reference(task, label):
    return {
        "FullyCorrect": 1.0, "PartiallyCorrect": 0.5, "Unsupported": 0.0,
        "None": 0.0, "ImageRelevant": 1.0, "LogicRelevant": 1.0, "Both": 1.0,
        "Correct": 1.0, "Incorrect": 0.0, "Relevant": 1.0, "Irrelevant": 0.0,
        "Informative": 1.0, "Uninformative": 0.0,
    }[label]


DIM_TASK = {
    "d_correct": "DescCorrectness", "d_relevant": "DescRelevance", "l_correct": "LogicCorrectness",
    "l_relevant": "LogicRelevance", "info": "Informativeness",
}


def say_label(rng, task, key):
    if task == "McotCorrectness":
        text = "Yes" if key == "Correct" else "No"
    else:
        text = DISPLAY.get(key, key) if rng.random() < 0.7 else key
    return rng.choice(["{}", "{}.", "Answer: {}", "I would label this step as {}."]).format(text)


def say_score(rng, value):
    return rng.choice(["{}", "Score: {}/10", "I'd give it {} out of 10", "{} - mostly sound"]).format(value)


def label_rows(rng, rid, step, task, gold):
    truth = gold if gold is not None else rng.choice(DOMAINS[task])
    u = rng.random()
    if u < 0.72:
        answer = truth
    else:
        answer = other(rng, task, truth)
    text = say_label(rng, task, answer)
    v = rng.random()
    if v < 0.06:
        responses = ["I am not sure.", text]
    elif v < 0.10:
        responses = ["N/A"]
    else:
        responses = [text]
    return [{"record": rid, "step": step, "task": task, "responses": responses}]


def score_rows(rng, rid, step, task, ref):
    rows = []
    for trial in range(3):
        base = round(10 * ref) if ref is not None else rng.randint(6, 10)
        value = max(0, min(10, base + rng.randint(-3, 3)))
        text = say_score(rng, value)
        v = rng.random()
        if v < 0.05:
            responses = ["Hard to say.", text]
        elif v < 0.08:
            responses = ["-"]
        else:
            responses = [text]
        rows.append({"record": rid, "step": step, "task": task, "trial": trial, "responses": responses})
    return rows


def typed_reference(gold_step):
    t = gold_step["step_type"]
    keys = []
    if t in ("Description", "Both"):
        keys += ["desc_correctness", "desc_relevance"]
    if t in ("Reasoning", "Both"):
        keys += ["logic_correctness", "logic_relevance", "informativeness"]
    vals = [reference(None, gold_step[k]) for k in keys]
    prod = 1.0
    for v in vals:
        prod *= v
    return prod ** (1.0 / len(vals))


GOLD_FIELD = {
    "StepType": "step_type", "DescCorrectness": "desc_correctness", "DescRelevance": "desc_relevance",
    "DescErrorType": "desc_error_type", "LogicCorrectness": "logic_correctness",
    "LogicRelevance": "logic_relevance", "Informativeness": "informativeness", "LogicErrorType": "logic_error_type",
}


def judge_table(rng, records):
    rows = []
    for r in sorted(records, key=lambda r: r["id"]):
        gold = r["gold"]
        rid = r["id"]
        for s in gold["steps"]:
            i = s["step_index"]
            for task in STEP_TASKS:
                rows += label_rows(rng, rid, i, task, s.get(GOLD_FIELD[task]))
            rows += score_rows(rng, rid, i, "Score:Step", typed_reference(s))
            for d in DIMENSIONS:
                key = GOLD_FIELD[DIM_TASK[d]]
                ref = reference(None, s[key]) if key in s else None
                rows += score_rows(rng, rid, i, f"Score:{d}", ref)
        rows += label_rows(rng, rid, 0, "McotCorrectness", "Correct" if gold["mcot_correct"] else "Incorrect")
        pred = r.get("prediction_correct")
        rows += label_rows(rng, rid, 0, "PredictionCorrectness", None if pred is None else ("Correct" if pred else "Incorrect"))
        rows += score_rows(rng, rid, 0, "Score:Mcot", 1.0 if gold["mcot_correct"] else 0.0)
    return rows


def garbage_table(records):
    """McotCorrectness answers for 20 chains: 6 garbage, 10 right, 4 wrong."""
    rows = []
    for n, r in enumerate(sorted(records, key=lambda r: r["id"])):
        truth = r["gold"]["mcot_correct"]
        if n % 10 in (0, 3, 7):
            text = "Banana"
        elif n % 10 in (5, 9):
            text = "No" if truth else "Yes"
        else:
            text = "Yes" if truth else "No"
        rows.append({"record": r["id"], "step": 0, "task": "McotCorrectness", "responses": [text]})
    return rows


# ---------------------------------------------------------------------------
# 30-case vote fixture. Raters a, b, c.


def votes_for(step, task, labels):
    return [vote(r, step, task, l) for r, l in zip("abc", labels) if l is not None]


def good_r(step, raters="abc"):
    out = []
    for task, label in (("StepType", "Reasoning"), ("LogicCorrectness", "Correct"), ("LogicRelevance", "Relevant"), ("Informativeness", "Informative")):
        out += [vote(r, step, task, label) for r in raters]
    return out


def good_d(step):
    out = []
    for task, label in (("StepType", "Description"), ("DescCorrectness", "FullyCorrect"), ("DescRelevance", "Both")):
        out += [vote(r, step, task, label) for r in "abc"]
    return out


def split_r(step):
    """Reasoning 2:1 over Description; the dissenter c follows the description path."""
    out = votes_for(step, "StepType", ["Reasoning", "Reasoning", "Description"])
    out += votes_for(step, "LogicCorrectness", ["Correct", "Correct", None])
    out += votes_for(step, "LogicRelevance", ["Relevant", "Relevant", None])
    out += votes_for(step, "Informativeness", ["Informative", "Informative", None])
    out += votes_for(step, "DescCorrectness", [None, None, "Unsupported"])
    out += votes_for(step, "DescErrorType", [None, None, "EntityFalse"])
    out += votes_for(step, "DescRelevance", [None, None, "None"])
    return out


def reasoning(step, lc, lr, inf, let=None, types=("Reasoning",) * 3):
    out = votes_for(step, "StepType", list(types))
    out += votes_for(step, "LogicCorrectness", lc)
    out += votes_for(step, "LogicRelevance", lr)
    out += votes_for(step, "Informativeness", inf)
    if let:
        out += votes_for(step, "LogicErrorType", let)
    return out


def description(step, dc, dr, det=None, types=("Description",) * 3):
    out = votes_for(step, "StepType", list(types))
    out += votes_for(step, "DescCorrectness", dc)
    out += votes_for(step, "DescRelevance", dr)
    if det:
        out += votes_for(step, "DescErrorType", det)
    return out


C3, REL3, INF3 = ["Correct"] * 3, ["Relevant"] * 3, ["Informative"] * 3


def vote30():
    cases = {
        "vc01": [good_r(1)],
        "vc02": [good_d(1)],
        "vc03": [reasoning(1, ["Correct", "Correct", "Incorrect"], REL3, INF3)],
        "vc04": [reasoning(1, ["Incorrect"] * 3, REL3, INF3, ["InterStep", "InterStep", "IntraStep"])],
        "vc05": [reasoning(1, ["Incorrect", "Incorrect", "Correct"], REL3, INF3, ["IntraStep", "IntraStep", None])],
        "vc06": [reasoning(1, ["Incorrect", "Incorrect", "Correct"], REL3, INF3, ["InterStep", "IntraStep", None])],
        "vc07": [votes_for(1, "StepType", ["Description", "Reasoning", "Both"])],
        "vc08": [reasoning(1, C3, REL3, ["Informative", "Uninformative", None])],
        "vc09": [good_r(1), split_r(2)],
        "vc10": [good_r(1), split_r(2), good_r(3)],
        "vc11": [good_r(1), split_r(2), split_r(3), good_r(4)],
        "vc12": [good_r(1), split_r(2), good_d(3), good_r(4)],
        "vc13": [split_r(1), split_r(2), good_r(3)],
        "vc14": [reasoning(1, ["Correct", "Incorrect", "Incorrect"], REL3, INF3, [None, "InterStep", "InterStep"], types=("Reasoning", "Reasoning", "Both"))
                 + votes_for(1, "DescCorrectness", [None, None, "FullyCorrect"])
                 + votes_for(1, "DescRelevance", [None, None, "Both"])],
        "vc15": [reasoning(1, ["Correct", "Incorrect", "Correct"], REL3, INF3, [None, "InterStep", None], types=("Reasoning", "Both", "Reasoning"))
                 + votes_for(1, "DescCorrectness", [None, "FullyCorrect", None])
                 + votes_for(1, "DescRelevance", [None, "Both", None])],
        "vc16": [description(1, ["PartiallyCorrect", "PartiallyCorrect", "FullyCorrect"], ["Both"] * 3, ["EntityFalse", "EntityFalse", None])],
        "vc17": [description(1, ["Unsupported"] * 3, ["ImageRelevant"] * 3, ["AttributeFalse", "SpatialRelFalse", "AttributeFalse"])],
        "vc18": [description(1, ["Unsupported"] * 3, ["ImageRelevant"] * 3, ["EntityFalse", "AttributeFalse", "SpatialRelFalse"])],
        "vc19": [description(1, ["PartiallyCorrect", "Unsupported", "FullyCorrect"], ["Both"] * 3, ["EntityFalse", "EntityFalse", None])],
        "vc20": [description(1, ["FullyCorrect"] * 3, ["None", "None", "Both"])],
        "vc21": [description(1, ["FullyCorrect"] * 3, ["LogicRelevant"] * 3, types=("Both",) * 3)
                 + votes_for(1, "LogicCorrectness", C3) + votes_for(1, "LogicRelevance", REL3) + votes_for(1, "Informativeness", INF3)],
        "vc22": [description(1, ["FullyCorrect"] * 3, ["ImageRelevant", "LogicRelevant", "None"], types=("Both",) * 3)
                 + votes_for(1, "LogicCorrectness", ["Correct", "Incorrect", None])
                 + votes_for(1, "LogicErrorType", [None, "IntraStep", None])
                 + votes_for(1, "LogicRelevance", REL3) + votes_for(1, "Informativeness", INF3)],
        "vc23": [good_d(1), reasoning(2, C3, ["Irrelevant", "Irrelevant", "Relevant"], INF3)],
        "vc24": [votes_for(1, "StepType", ["Description", "Reasoning", None])],
        "vc25": [good_r(1), votes_for(2, "StepType", ["Both", "Reasoning", "Description"])],
        "vc26": [split_r(1), split_r(2), good_r(3), good_r(4), good_r(5)],
        "vc27": [good_r(1, raters="ab")],
        "vc28": [good_r(1),
                 description(2, ["PartiallyCorrect", "PartiallyCorrect", None], ["Both", "Both", None], ["NonSpatialRelFalse", "NonSpatialRelFalse", None], types=("Description", "Description", "Reasoning"))
                 + votes_for(2, "LogicCorrectness", [None, None, "Correct"])
                 + votes_for(2, "LogicRelevance", [None, None, "Relevant"])
                 + votes_for(2, "Informativeness", [None, None, "Informative"]),
                 good_r(3)],
        "vc29": [reasoning(1, ["Correct", "Incorrect", "Incorrect"], REL3, INF3, [None, "Both", "Both"])],
        "vc30": [description(1, ["FullyCorrect", "FullyCorrect", "PartiallyCorrect"], ["Both"] * 3, [None, None, "EntityFalse"], types=("Both",) * 3)
                 + votes_for(1, "LogicCorrectness", ["Incorrect"] * 3)
                 + votes_for(1, "LogicErrorType", ["InterStep"] * 3)
                 + votes_for(1, "LogicRelevance", REL3) + votes_for(1, "Informativeness", INF3)],
    }
    out = []
    for n, (rid, steps) in enumerate(cases.items()):
        anns = [a for s in steps for a in s]
        texts = [f"{rid} step {i + 1}." for i in range(len(steps))]
        out.append(record(rid, "Hard" if n % 2 == 0 else "Normal", rid, texts, anns))
    return out


def main():
    rng = random.Random(20241015)
    write_jsonl(HERE / "mcot20_votes.jsonl", mcot20(rng))
    aggregate(HERE / "mcot20_votes.jsonl", HERE / "mcot20.jsonl")
    gold = read_jsonl(HERE / "mcot20.jsonl")
    invalid = [r["id"] for r in gold if r["gold"]["validity"] != "Valid"]
    assert not invalid, f"fixture records came out invalid: {invalid}"
    write_jsonl(HERE / "judge_table.jsonl", judge_table(rng, gold))
    write_jsonl(HERE / "garbage_table.jsonl", garbage_table(gold))

    write_jsonl(HERE / "ranking_votes.jsonl", ranking(rng))
    aggregate(HERE / "ranking_votes.jsonl", HERE / "ranking.jsonl")

    write_jsonl(HERE / "vote30.jsonl", vote30())
    write_jsonl(HERE / "ranking_table.jsonl", judge_table(rng, read_jsonl(HERE / "ranking.jsonl")))


if __name__ == "__main__":
    main()
