#!/usr/bin/env python3
"""Dependency-parse a prepared TSV split into CoNLL-U for `kgan prepare`.

    tools/parse_adapter.py <prepared/train.tsv> <train.conllu> [--model en_core_web_sm]

Each TSV line is "tokens<TAB>aspect_start<TAB>aspect_len<TAB>label<TAB>id" with
space-separated tokens. The parser runs on those tokens as given (no
re-tokenization), so the parse always has one row per corpus token, and each
block is written with "# sent_id = <id>". Instances that share a sentence are
parsed once under the sentence id (the part before '#').

When the parser splits a line into several sentences, the extra roots are
attached to the first one so that every block is a single tree.
"""

from __future__ import annotations

import argparse
import sys
from typing import Callable, Iterable, Iterator, Sequence

Parse = tuple[list[int], list[str]]  # 0-based heads (-1 = root), labels
Parser = Callable[[Sequence[str]], Parse]


def read_tsv(lines: Iterable[str]) -> Iterator[tuple[str, list[str]]]:
    """Yields (sentence id, tokens), once per sentence."""
    seen: set[str] = set()
    for n, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ValueError(f"line {n}: expected 5 tab-separated fields, got {len(fields)}")
        tokens = fields[0].split(" ")
        sid = fields[4].split("#", 1)[0]
        if sid in seen:
            continue
        seen.add(sid)
        yield sid, tokens


def single_root(heads: Sequence[int]) -> list[int]:
    roots = [i for i, h in enumerate(heads) if h < 0]
    if not roots:
        raise ValueError("parse has no root")
    first = roots[0]
    return [first if (h < 0 and i != first) else h for i, h in enumerate(heads)]


def to_conllu(sid: str, tokens: Sequence[str], heads: Sequence[int], labels: Sequence[str]) -> str:
    if not (len(tokens) == len(heads) == len(labels)):
        raise ValueError(f"sentence {sid}: {len(tokens)} tokens but {len(heads)} heads")
    heads = single_root(heads)
    rows = [f"# sent_id = {sid}"]
    for i, (form, head, label) in enumerate(zip(tokens, heads, labels)):
        rows.append("\t".join([str(i + 1), form, "_", "_", "_", "_", str(head + 1),
                               label if head >= 0 else "root", "_", "_"]))
    return "\n".join(rows) + "\n\n"


def convert(lines: Iterable[str], parse: Parser) -> Iterator[str]:
    for sid, tokens in read_tsv(lines):
        heads, labels = parse(tokens)
        yield to_conllu(sid, tokens, heads, labels)


def spacy_parser(model: str) -> Parser:
    try:
        import spacy
        from spacy.tokens import Doc
    except ImportError:
        sys.exit("parse_adapter: spaCy is not installed (pip install spacy && python -m spacy download "
                 + model + ")")
    nlp = spacy.load(model, exclude=["ner", "lemmatizer"])

    def parse(tokens: Sequence[str]) -> Parse:
        doc = Doc(nlp.vocab, words=list(tokens))
        for _, component in nlp.pipeline:
            doc = component(doc)
        heads = [-1 if t.head.i == t.i else t.head.i for t in doc]
        return heads, [t.dep_.lower() or "dep" for t in doc]

    return parse


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("tsv", help="prepared split (e.g. <output_dir>/prepared/train.tsv)")
    ap.add_argument("out", help="CoNLL-U file to write")
    ap.add_argument("--model", default="en_core_web_sm", help="spaCy pipeline name")
    args = ap.parse_args(argv)

    parse = spacy_parser(args.model)
    with open(args.tsv, encoding="utf-8") as src, open(args.out, "w", encoding="utf-8") as dst:
        count = 0
        for block in convert(src, parse):
            dst.write(block)
            count += 1
    print(f"parse_adapter: {count} sentences -> {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
