#!/usr/bin/env python3
"""Regenerates the shipped dataset fixtures under data/.

Every problem is a linear one-step equation: given x + a = b, show c * x = d.
A problem belongs to one category, which fixes how the scripted agents and the
stub compiler treat it:

  correct   true label; the solution verifies
  false     false label; the stated d is wrong and its proof is rejected
  hard      true label; the prover never closes lemma 1
  trivial   true label; the goal falls to automation alone (VerifiedTrivial)
  poisoned  false label; the stated answer is right but the solution's first
            lemma is wrong, so only an answer-level check is fooled

For each dataset the script writes <name>.jsonl plus mock/<name>/ with
agents.json, backend.json, config.json and expected.json (confusion counts
for the structured pipeline and the answer-only baseline, one run, trivial
verdicts excluded).
"""

import argparse
import json
import random
from pathlib import Path

PROVE = "```lean4\nby\n  omega\n```"


def lean(body):
    return "```lean4\n" + body + " := by sorry\n```"


def make_problem(rng, used, digits):
    lo, hi = 10 ** (digits - 1), 10**digits - 1
    while True:
        v = rng.randint(lo, hi - 1)
        c = rng.randint(2, 9)
        a = rng.randint(1, 9)
        if v not in used and v + 1 not in used:
            used.update({v, v + 1})
            return {"a": a, "b": v + a, "c": c, "v": v, "d": c * v}


def build(name, categories, digits, seed):
    rng = random.Random(seed)
    used = set()
    records, agents, rules, trivial_ok = [], {}, [], []
    expected = {"structured": dict(tp=0, fp=0, fn=0, tn=0), "baseline": dict(tp=0, fp=0, fn=0, tn=0)}
    statements = []

    claims = set()
    for i, cat in enumerate(categories):
        while True:
            p = make_problem(rng, used, digits)
            a, b, c, v, d = p["a"], p["b"], p["c"], p["v"], p["d"]
            stated = d + c if cat == "false" else d  # the claim in the problem text
            # Answers key the baseline script, so they must be unique.
            if stated not in claims:
                claims.add(stated)
                break
        v_claim = v + 1 if cat == "poisoned" else v  # the solution's first lemma
        pid = f"{name}-{i + 1:03d}"
        text = f"Let x be an integer with x + {a} = {b}. Show that {c} * x = {stated}."
        label = cat in ("correct", "hard", "trivial")
        records.append({"id": pid, "text": text, "givens": [f"x + {a} = {b}"], "answer": str(stated), "label": label})

        solution = (
            f"LEMMA 1:\nPREMISES:\n[GIVEN] x + {a} = {b}\nCONCLUSION: x = {v_claim}\n"
            f"LEMMA 2:\nPREMISES:\n[LEMMA 1] x = {v_claim}\nCONCLUSION: {c} * x = {stated}\n"
            f"GOAL: {c} * x = {stated}\n"
        )
        agents[f"Solver:contains:with x + {a} = {b}. Show"] = [solution]
        agents[f"Translator:contains:Statement:\nx = {v_claim}"] = [lean(f"theorem s (x : ℤ) (h₀ : x + {a} = {b}) : x = {v_claim}")]
        # Lemma 2 and the goal share a statement; the hypothesis tells them apart.
        agents[f"Translator:contains:h1: x = {v_claim}\n"] = [lean(f"theorem s (x : ℤ) (h₀ : x = {v_claim}) : {c} * x = {stated}")]
        agents[f"Translator:contains:Statement:\n{c} * x = {stated}"] = [
            lean(f"theorem g (x : ℤ) (h₀ : x + {a} = {b}) : {c} * x = {stated}")]
        agents[f"Translator:contains:The answer is {stated}."] = [
            lean(f"theorem b (x : ℤ) (h₀ : x + {a} = {b}) : {c} * x = {stated}")]
        statements += [f"x = {v_claim}", f"{c} * x = {stated}"]

        if cat == "false":
            rules.append({"contains": f": {c} * x = {stated} := by\n  omega", "status": "Error",
                          "diagnostics": [{"severity": "error", "line": 6, "column": 2, "message": "omega could not prove the goal"}]})
        if cat == "poisoned":
            rules.append({"contains": f"(h₀ : x + {a} = {b}) : x = {v_claim} := by\n  omega", "status": "Error",
                          "diagnostics": [{"severity": "error", "line": 6, "column": 2, "message": "omega could not prove the goal"}]})
        if cat == "hard":
            rules.append({"contains": f"(h₀ : x + {a} = {b}) : x = {v} := by\n  omega", "status": "Error",
                          "diagnostics": [{"severity": "error", "line": 6, "column": 2, "message": "deterministic timeout"}]})
        if cat == "trivial":
            trivial_ok.append({"contains": f"theorem trivial_check_goal (x : ℤ) (h₀ : x + {a} = {b}) : {c} * x = {stated} :=",
                               "status": "Ok"})

        structured_pos = cat == "correct"
        baseline_pos = cat in ("correct", "hard", "trivial", "poisoned")
        for key, pos in (("structured", structured_pos), ("baseline", baseline_pos)):
            cell = ("tp" if label else "fp") if pos else ("fn" if label else "tn")
            expected[key][cell] += 1

    # Contains-keys must not shadow one another.
    for s in statements:
        for t in statements:
            assert s == t or not t.startswith(s), (s, t)
    answers = [r["answer"] for r in records]
    assert len(set(answers)) == len(answers)

    agents["Prover:*"] = [PROVE]
    backend = {
        "rules": trivial_ok + rules + [{"contains": "theorem trivial_check_goal", "status": "Error",
                                        "diagnostics": [{"severity": "error", "line": 5, "column": 2, "message": "linarith failed"}]}],
        "default": {"status": "Ok"},
    }
    config = {
        "agents": {"transport": "mock", "mock_script": "agents.json"},
        "backend": {"kind": "stub", "stub_script": "backend.json"},
        "pipeline": {"prover_retries": 1, "trivial_budget": 30, "intro_vars": "off"},
    }
    return records, agents, backend, config, expected


def write(root, name, parts):
    records, agents, backend, config, expected = parts
    with open(root / f"{name}.jsonl", "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")
    d = root / "mock" / name
    d.mkdir(parents=True, exist_ok=True)
    for fname, obj in (("agents.json", agents), ("backend.json", backend), ("config.json", config),
                       ("expected.json", expected)):
        (d / fname).write_text(json.dumps(obj, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)

    easy = ["correct"] * 6 + ["false"] * 2 + ["hard", "trivial"]
    random.Random(1).shuffle(easy)
    write(root, "easy", build("easy", easy, 2, seed=11))

    similar = ["correct"] * 105 + ["false"] * 30 + ["hard"] * 10 + ["trivial"] * 5
    random.Random(2).shuffle(similar)
    write(root, "similar", build("similar", similar, 3, seed=22))

    poisoned = ["correct", "poisoned"] * 4
    write(root, "poisoned", build("poisoned", poisoned, 2, seed=33))


if __name__ == "__main__":
    main()
