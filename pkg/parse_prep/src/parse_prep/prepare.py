"""Convert a raw DocRED-style corpus into the canonical pre-parsed files.

Input: one JSON array of documents, each with `title`, `sents` (arrays of
token strings), `vertexSet` (one mention list per entity, with `sent_id`
and sentence-local `pos` spans), and `labels` (`h`, `t`, `r`, `evidence`).

Output, per split: `<split>.jsonl` (one canonical record per line),
`<split>.conllu` and `<split>.trees` (documents introduced by
`# newdoc id = <doc_id>`), plus `relations.json` listing the relation
names in index order. Documents the backend cannot parse verbatim are
skipped and reported, never realigned.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

from .backends import ParseFailure


@dataclass
class PrepareResult:
    prepared: int = 0
    skipped: list = field(default_factory=list)  # (doc_id, reason)

    def summary(self):
        lines = [f"prepared {self.prepared} documents, skipped {len(self.skipped)}"]
        for doc_id, reason in self.skipped:
            lines.append(f"  skipped {doc_id}: {reason}")
        return "\n".join(lines)


def load_raw(path):
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, list):
        raise ValueError(f"{path}: expected a JSON array of documents")
    return data


def _check_tokens(sentences):
    for s_index, sentence in enumerate(sentences):
        if not sentence:
            raise ParseFailure(f"sentence {s_index} is empty")
        for token in sentence:
            if not isinstance(token, str) or not token:
                raise ParseFailure(f"sentence {s_index} has an empty token")
            if any(ch in token for ch in " \t\n"):
                raise ParseFailure(
                    f"sentence {s_index} token {token!r} contains whitespace")


def _parse_document(raw, backend):
    doc_id = str(raw.get("title", "")) or None
    if not doc_id:
        raise ParseFailure("document has no title")
    sentences = raw.get("sents")
    if not isinstance(sentences, list) or not sentences:
        raise ParseFailure("document has no sentences")
    _check_tokens(sentences)

    parses, trees = [], []
    for s_index, sentence in enumerate(sentences):
        heads, deprels, tree = backend.parse(sentence)
        if len(heads) != len(sentence) or len(deprels) != len(sentence):
            raise ParseFailure(
                f"sentence {s_index}: backend returned {len(heads)} heads "
                f"for {len(sentence)} tokens")
        parses.append((heads, deprels))
        trees.append(tree)

    entities = []
    for entity_id, mentions in enumerate(raw.get("vertexSet", [])):
        converted = []
        for mention in mentions:
            sent = int(mention["sent_id"])
            start, end = (int(x) for x in mention["pos"])
            if not (0 <= sent < len(sentences)):
                raise ParseFailure(f"entity {entity_id}: mention sentence {sent} "
                                   f"out of range")
            if not (0 <= start < end <= len(sentences[sent])):
                raise ParseFailure(f"entity {entity_id}: mention span "
                                   f"[{start},{end}) out of range")
            converted.append({"sent": sent, "start": start, "end": end})
        if not converted:
            raise ParseFailure(f"entity {entity_id} has no mentions")
        entities.append({"id": entity_id,
                         "type": str(mentions[0].get("type", "")),
                         "mentions": converted})

    labels = []
    for label in raw.get("labels", []):
        labels.append({"h": int(label["h"]), "t": int(label["t"]),
                       "r": str(label["r"]),
                       "evidence": [int(e) for e in label.get("evidence", [])]})
        for side in ("h", "t"):
            if not (0 <= int(label[side]) < len(entities)):
                raise ParseFailure(f"label references missing entity {label[side]}")

    record = {"doc_id": doc_id, "sentences": sentences,
              "entities": entities, "labels": labels}
    return doc_id, record, parses, trees


def _write_atomic(path, payload):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def prepare(raw_path, out_dir, backend, split="train", limit=None):
    """Parse the raw corpus and emit the three canonical files plus schema."""
    raw_docs = load_raw(raw_path)
    if limit is not None:
        raw_docs = raw_docs[:limit]
    os.makedirs(out_dir, exist_ok=True)

    result = PrepareResult()
    records, conllu_parts, tree_parts = [], [], []
    relations = set()
    seen_ids = set()
    for raw in raw_docs:
        try:
            doc_id, record, parses, trees = _parse_document(raw, backend)
            if doc_id in seen_ids:
                raise ParseFailure(f"duplicate doc id {doc_id!r}")
        except ParseFailure as exc:
            result.skipped.append((str(raw.get("title", "?")), str(exc)))
            continue
        seen_ids.add(doc_id)
        result.prepared += 1
        relations.update(label["r"] for label in record["labels"])
        records.append(json.dumps(record, sort_keys=True, separators=(",", ":")))

        conllu_parts.append(f"# newdoc id = {doc_id}")
        for sentence, (heads, deprels) in zip(record["sentences"], parses):
            for index, (token, head, rel) in enumerate(zip(sentence, heads, deprels)):
                conllu_parts.append("\t".join([
                    str(index + 1), token, "_", "_", "_", "_",
                    str(head), rel, "_", "_"]))
            conllu_parts.append("")

        tree_parts.append(f"# newdoc id = {doc_id}")
        tree_parts.extend(trees)
        tree_parts.append("")

    base = os.path.join(out_dir, split)
    _write_atomic(base + ".jsonl", ("\n".join(records) + "\n").encode("utf-8")
                  if records else b"")
    _write_atomic(base + ".conllu", ("\n".join(conllu_parts) + "\n").encode("utf-8")
                  if conllu_parts else b"")
    _write_atomic(base + ".trees", ("\n".join(tree_parts) + "\n").encode("utf-8")
                  if tree_parts else b"")
    _write_atomic(os.path.join(out_dir, "relations.json"),
                  (json.dumps(sorted(relations), indent=0) + "\n").encode("utf-8"))
    return result
