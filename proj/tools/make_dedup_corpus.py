#!/usr/bin/env python3
"""Builds tests/fixtures/dedup: 30 scripts in 11 equivalence classes plus classes.json."""
import json
import pathlib
import re

root = pathlib.Path(__file__).resolve().parent.parent
scripts = sorted((root / "data" / "scripts").glob("*.mini"))[:11]
out = root / "tests" / "fixtures" / "dedup"
corpus = out / "corpus"
corpus.mkdir(parents=True, exist_ok=True)
for old in corpus.glob("*"):
    old.unlink()

TOKEN = re.compile(r'"(?:\\.|[^"\\])*"|\'(?:\\.|[^\'\\])*\'|//[^\n]*|#[^\n]*|/\*.*?\*/|\$[A-Za-z_]\w*', re.S)


def rename(src):
    return TOKEN.sub(lambda m: "$r_" + m.group(0)[1:] if m.group(0).startswith("$") else m.group(0), src)


def comment(src):
    return "// duplicate with a note\n" + src.replace(";\n", ";  # trailing\n", 1)


def reflow(src):
    return "\n\n" + src.replace(" = ", "=").replace("\n", "\n\n")


files = {}
for k, path in enumerate(scripts, start=1):
    base = path.read_text()
    c = f"c{k:02d}"
    files[f"{c}_a.mini"] = (base, k, 0)
    if k <= 6:
        files[f"{c}_b.mini"] = (base, k, 1)
    if k <= 5:
        files[f"{c}_c.mini"] = (comment(base), k, 2)
    if k == 9:
        files[f"{c}_c.mini"] = (reflow(base), k, 2)
    if 3 <= k <= 7 or k == 10:
        files[f"{c}_d.mini"] = (rename(base), k, 3)
    if k == 8:
        files[f"{c}_d.mini"] = (comment(rename(base)), k, 3)

assert len(files) == 30, len(files)
manifest = {}
for name, (text, k, stage) in sorted(files.items()):
    (corpus / name).write_text(text)
    manifest[name] = {"class": k, "removed_at_stage": stage}
doc = {"classes": 11, "files": manifest}
(out / "classes.json").write_text(json.dumps(doc, indent=2) + "\n")
print(f"wrote {len(files)} files")
