"""Canonical data model for annotated documents and strict file readers.

A corpus lives in three sibling files: a JSON-lines record file
(`X.jsonl`), a CoNLL-U dependency file (`X.conllu`), and a bracketed
constituency file (`X.trees`), the latter two segmented per document with
`# newdoc id = <doc_id>` comments. Loading stitches the three together and
rejects anything that violates a documented invariant; loaded documents
are immutable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

NA_LABEL = "NA"

# Leaf surfaces in tree files cannot contain raw brackets or whitespace;
# both sides of the leaf/token comparison use this escaping.
_TREE_ESCAPES = (("(", "-LRB-"), (")", "-RRB-"), (" ", "-SP-"), ("\t", "-TAB-"))


class CorpusError(ValueError):
    """Raised for malformed corpus, dependency, or constituency files."""


def escape_leaf(surface: str) -> str:
    for raw, escaped in _TREE_ESCAPES:
        surface = surface.replace(raw, escaped)
    return surface


def unescape_leaf(surface: str) -> str:
    for raw, escaped in reversed(_TREE_ESCAPES):
        surface = surface.replace(escaped, raw)
    return surface


@dataclass(frozen=True)
class Token:
    surface: str
    sentence_index: int
    position_in_sentence: int
    global_index: int


@dataclass(frozen=True)
class Mention:
    entity_id: int
    sentence_index: int
    start: int  # global token index, inclusive
    end: int    # global token index, exclusive


@dataclass(frozen=True)
class Entity:
    entity_id: int
    mentions: tuple
    type_label: str = ""


@dataclass(frozen=True)
class RelationFact:
    subject_entity: int
    object_entity: int
    relation_label: int
    evidence_sentences: tuple = ()


@dataclass(frozen=True)
class DependencyParse:
    """Per-sentence head indices (0 = sentence root, else 1-based) and labels."""
    heads: tuple
    deprels: tuple


@dataclass(frozen=True)
class ConstituencyNode:
    """A phrase-structure node; a leaf carries its token binding and surface."""
    label: str
    children: tuple = ()
    leaf_token: int | None = None
    leaf_surface: str | None = None

    def is_leaf(self):
        return not self.children

    def leaves(self):
        if self.is_leaf():
            return [self]
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf():
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out


@dataclass(frozen=True)
class AnnotatedDocument:
    doc_id: str
    sentences: tuple           # tuple of tuples of Token
    entities: tuple            # tuple of Entity
    gold_facts: tuple          # tuple of RelationFact
    dependency_parses: tuple   # one DependencyParse per sentence
    constituency_trees: tuple  # one ConstituencyNode per sentence

    def tokens(self):
        return [token for sentence in self.sentences for token in sentence]

    def sentence_offsets(self):
        offsets, total = [], 0
        for sentence in self.sentences:
            offsets.append(total)
            total += len(sentence)
        return offsets

    def token_count(self):
        return sum(len(sentence) for sentence in self.sentences)

    def entity_by_id(self, entity_id):
        for entity in self.entities:
            if entity.entity_id == entity_id:
                return entity
        raise KeyError(entity_id)


@dataclass(frozen=True)
class LabelSchema:
    """Relation names indexed 0..C-1; NA is a reserved pseudo-class, not a name."""
    relation_names: tuple

    def __post_init__(self):
        if len(set(self.relation_names)) != len(self.relation_names):
            raise CorpusError("relation names must be unique")
        if NA_LABEL in self.relation_names:
            raise CorpusError(f"{NA_LABEL!r} is reserved and cannot be a relation name")

    @property
    def num_relations(self):
        return len(self.relation_names)

    def index_of(self, name):
        try:
            return self.relation_names.index(name)
        except ValueError:
            raise CorpusError(f"unknown relation label {name!r}") from None

    def name_of(self, index):
        return self.relation_names[index]

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as handle:
            names = json.load(handle)
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise CorpusError(f"{path}: expected a JSON array of relation names")
        return cls(tuple(names))

    def save(self, path):
        from .checkpoint import write_atomic
        write_atomic(path, (json.dumps(list(self.relation_names), indent=0) + "\n").encode("utf-8"))


# -- CoNLL-U -------------------------------------------------------------


def parse_conllu(text):
    """Parse CoNLL-U content into one DependencyParse per sentence block.

    Multiword-token ranges (`1-2`) and empty nodes (`2.1`) are rejected;
    head/deprel columns are preserved exactly. Also returns the FORM column
    per sentence so callers can align against their own tokens.
    """
    parses, forms = [], []
    heads, rels, words = [], [], []
    ordinal = 0

    def flush(line_no):
        nonlocal heads, rels, words, ordinal
        if not words:
            return
        ordinal += 1
        _check_heads(heads, ordinal, line_no)
        parses.append(DependencyParse(tuple(heads), tuple(rels)))
        forms.append(tuple(words))
        heads, rels, words = [], [], []

    line_no = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            flush(line_no)
            continue
        if line.startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 10:
            raise CorpusError(f"line {line_no}: expected 10 columns, got {len(columns)}")
        token_id, form, head, deprel = columns[0], columns[1], columns[6], columns[7]
        if "-" in token_id or "." in token_id:
            raise CorpusError(f"line {line_no}: multiword/empty-node id {token_id!r} not supported")
        if not token_id.isdigit() or int(token_id) != len(words) + 1:
            raise CorpusError(f"line {line_no}: token ids must count 1..n, got {token_id!r}")
        if not head.isdigit():
            raise CorpusError(f"line {line_no}: non-integer head {head!r}")
        heads.append(int(head))
        rels.append(deprel)
        words.append(form)
    flush(line_no + 1)
    return parses, forms


def _check_heads(heads, sentence_ordinal, line_no):
    n = len(heads)
    roots = [i for i, h in enumerate(heads) if h == 0]
    for i, h in enumerate(heads):
        if h < 0 or h > n:
            raise CorpusError(
                f"sentence {sentence_ordinal} (near line {line_no}): token {i + 1} "
                f"head {h} out of range 0..{n}")
    if len(roots) != 1:
        raise CorpusError(
            f"sentence {sentence_ordinal} (near line {line_no}): expected exactly one "
            f"root, found {len(roots)}")
    # Reachability from the root proves the head array is a tree.
    children = [[] for _ in range(n)]
    for i, h in enumerate(heads):
        if h > 0:
            children[h - 1].append(i)
    seen, stack = set(), [roots[0]]
    while stack:
        node = stack.pop()
        seen.add(node)
        stack.extend(children[node])
    if len(seen) != n:
        stranded = sorted(set(range(n)) - seen)[0] + 1
        raise CorpusError(
            f"sentence {sentence_ordinal} (near line {line_no}): cycle detected, "
            f"token {stranded} unreachable from root")


def dependency_root(parse: DependencyParse):
    """0-based sentence position of the token with head 0."""
    return parse.heads.index(0)


# -- bracketed constituency trees -----------------------------------------


def parse_bracketed_tree(text, sentence_tokens=None, global_offset=0):
    """Parse one Penn-style S-expression into a ConstituencyNode.

    When `sentence_tokens` is given, leaves are bound left-to-right to
    global token indices starting at `global_offset`, and both leaf count
    and surfaces must match the sentence exactly.
    """
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    if not tokens:
        raise CorpusError("empty tree text")
    position = 0

    def parse_node():
        nonlocal position
        if tokens[position] != "(":
            raise CorpusError(f"expected '(' at item {position} of tree {text!r}")
        position += 1
        if position >= len(tokens) or tokens[position] in "()":
            raise CorpusError(f"node without a label in tree {text!r}")
        label = tokens[position]
        position += 1
        children = []
        leaf_surface = None
        while position < len(tokens) and tokens[position] != ")":
            if tokens[position] == "(":
                children.append(parse_node())
            else:
                if leaf_surface is not None or children:
                    raise CorpusError(f"mixed leaf/child content under {label!r} in {text!r}")
                leaf_surface = tokens[position]
                position += 1
        if position >= len(tokens):
            raise CorpusError(f"unbalanced brackets in tree {text!r}")
        position += 1  # consume ')'
        if leaf_surface is None and not children:
            raise CorpusError(f"empty node {label!r} in tree {text!r}")
        return ConstituencyNode(label=label, children=tuple(children),
                                leaf_surface=leaf_surface)

    root = parse_node()
    if position != len(tokens):
        raise CorpusError(f"trailing content after tree: {text!r}")
    if sentence_tokens is not None:
        root, count = _bind_leaves(root, 0, global_offset)
        if count != len(sentence_tokens):
            raise CorpusError(
                f"tree has {count} leaves but the sentence has {len(sentence_tokens)} tokens")
        for leaf, token in zip(root.leaves(), sentence_tokens):
            if leaf.leaf_surface != escape_leaf(token):
                raise CorpusError(
                    f"leaf {leaf.leaf_surface!r} does not match token {token!r}")
    return root


def _bind_leaves(node, counter, global_offset):
    if node.is_leaf():
        bound = ConstituencyNode(label=node.label, children=(),
                                 leaf_token=global_offset + counter,
                                 leaf_surface=node.leaf_surface)
        return bound, counter + 1
    children = []
    for child in node.children:
        child, counter = _bind_leaves(child, counter, global_offset)
        children.append(child)
    return ConstituencyNode(label=node.label, children=tuple(children)), counter


def format_tree(node):
    if node.is_leaf():
        return f"({node.label} {node.leaf_surface})"
    return f"({node.label} " + " ".join(format_tree(c) for c in node.children) + ")"


# -- validation -----------------------------------------------------------


def validate_document(doc: AnnotatedDocument, schema: LabelSchema | None = None):
    """Return every invariant violation as a report entry; empty means valid.

    The report order is deterministic: tokens, entities/mentions, facts,
    dependency parses, constituency trees.
    """
    report = []
    where = f"doc {doc.doc_id}"
    tokens = doc.tokens()
    offsets = doc.sentence_offsets()
    total = len(tokens)

    for expected, token in enumerate(tokens):
        if token.global_index != expected:
            report.append(f"{where}: token {expected} has global_index {token.global_index}")
        if not token.surface:
            report.append(f"{where}: token {expected} has an empty surface")
        elif any(ch in token.surface for ch in " \t\n"):
            report.append(f"{where}: token {expected} surface {token.surface!r} "
                          f"contains whitespace")

    entity_ids = [entity.entity_id for entity in doc.entities]
    if len(set(entity_ids)) != len(entity_ids):
        report.append(f"{where}: duplicate entity ids")
    known = set(entity_ids)
    for entity in doc.entities:
        if not entity.mentions:
            report.append(f"{where}: entity {entity.entity_id} has no mentions")
        for mention in entity.mentions:
            label = (f"{where}: mention of entity {entity.entity_id} "
                     f"[{mention.start},{mention.end})")
            if mention.entity_id not in known:
                report.append(f"{label}: refers to unknown entity {mention.entity_id}")
            if mention.start >= mention.end:
                report.append(f"{label}: empty or inverted span")
                continue
            if mention.start < 0 or mention.end > total:
                report.append(f"{label}: span outside the document")
                continue
            if not (0 <= mention.sentence_index < len(doc.sentences)):
                report.append(f"{label}: sentence index {mention.sentence_index} out of range")
                continue
            lo = offsets[mention.sentence_index]
            hi = lo + len(doc.sentences[mention.sentence_index])
            if mention.start < lo or mention.end > hi:
                report.append(f"{label}: crosses the boundary of sentence "
                              f"{mention.sentence_index}")

    for fact in doc.gold_facts:
        label = f"{where}: fact ({fact.subject_entity},{fact.object_entity},{fact.relation_label})"
        if fact.subject_entity == fact.object_entity:
            report.append(f"{label}: subject equals object")
        for side in (fact.subject_entity, fact.object_entity):
            if side not in known:
                report.append(f"{label}: unknown entity {side}")
        if fact.relation_label < 0:
            report.append(f"{label}: negative relation index")
        if schema is not None and fact.relation_label >= schema.num_relations:
            report.append(f"{label}: relation index outside the schema "
                          f"(C={schema.num_relations})")
        for sentence_index in fact.evidence_sentences:
            if not (0 <= sentence_index < len(doc.sentences)):
                report.append(f"{label}: evidence sentence {sentence_index} out of range")

    if len(doc.dependency_parses) != len(doc.sentences):
        report.append(f"{where}: {len(doc.dependency_parses)} dependency parses for "
                      f"{len(doc.sentences)} sentences")
    for index, parse in enumerate(doc.dependency_parses):
        if index >= len(doc.sentences):
            break
        n = len(doc.sentences[index])
        prefix = f"{where} sentence {index}"
        if len(parse.heads) != n or len(parse.deprels) != n:
            report.append(f"{prefix}: parse covers {len(parse.heads)} tokens, sentence has {n}")
            continue
        roots = [i for i, h in enumerate(parse.heads) if h == 0]
        if len(roots) != 1:
            report.append(f"{prefix}: multiple roots (tokens {', '.join(str(r + 1) for r in roots)})"
                          if roots else f"{prefix}: no root")
        if any(h < 0 or h > n for h in parse.heads):
            report.append(f"{prefix}: head index out of range")
        elif len(roots) == 1 and not _is_tree(parse.heads, roots[0]):
            report.append(f"{prefix}: dependency heads contain a cycle")

    if len(doc.constituency_trees) != len(doc.sentences):
        report.append(f"{where}: {len(doc.constituency_trees)} constituency trees for "
                      f"{len(doc.sentences)} sentences")
    for index, tree in enumerate(doc.constituency_trees):
        if index >= len(doc.sentences):
            break
        prefix = f"{where} sentence {index}"
        sentence = doc.sentences[index]
        leaves = tree.leaves()
        if len(leaves) != len(sentence):
            report.append(f"{prefix}: tree has {len(leaves)} leaves, sentence has "
                          f"{len(sentence)} tokens")
            continue
        for leaf, token in zip(leaves, sentence):
            if leaf.leaf_token != token.global_index:
                report.append(f"{prefix}: leaf/token misalignment at token "
                              f"{token.position_in_sentence}")
                break
            if leaf.leaf_surface != escape_leaf(token.surface):
                report.append(f"{prefix}: leaf {leaf.leaf_surface!r} does not match token "
                              f"{token.surface!r}")
                break
    return report


def _is_tree(heads, root):
    children = [[] for _ in heads]
    for i, h in enumerate(heads):
        if h > 0:
            children[h - 1].append(i)
    seen, stack = set(), [root]
    while stack:
        node = stack.pop()
        seen.add(node)
        stack.extend(children[node])
    return len(seen) == len(heads)


# -- loading and saving ---------------------------------------------------


def sibling_paths(jsonl_path):
    base, _ = os.path.splitext(jsonl_path)
    return base + ".conllu", base + ".trees"


def load_corpus(path, schema: LabelSchema):
    """Load and validate every document of a corpus record file.

    `path` names the JSON-lines record file; the dependency and
    constituency files are the same basename with `.conllu` and `.trees`
    extensions.
    """
    conllu_path, trees_path = sibling_paths(path)
    for required in (path, conllu_path, trees_path):
        if not os.path.exists(required):
            raise CorpusError(f"missing corpus file {required}")
    with open(conllu_path, "r", encoding="utf-8") as handle:
        parse_blocks = _split_newdoc(handle.read(), conllu_path)
    with open(trees_path, "r", encoding="utf-8") as handle:
        tree_blocks = _split_newdoc(handle.read(), trees_path)

    documents = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path} line {line_no}: invalid JSON ({exc})") from exc
            documents.append(
                _build_document(record, schema, parse_blocks, tree_blocks, path, line_no))
    return documents


def _split_newdoc(text, path):
    """Split a multi-document file on `# newdoc id = <doc_id>` markers."""
    blocks = {}
    current_id, current_lines = None, []
    for line in text.splitlines():
        if line.startswith("# newdoc id = "):
            if current_id is not None:
                blocks[current_id] = "\n".join(current_lines)
            current_id = line[len("# newdoc id = "):].strip()
            if current_id in blocks:
                raise CorpusError(f"{path}: duplicate document id {current_id!r}")
            current_lines = []
        elif current_id is not None:
            current_lines.append(line)
        elif line.strip():
            raise CorpusError(f"{path}: content before the first '# newdoc id =' marker")
    if current_id is not None:
        blocks[current_id] = "\n".join(current_lines)
    return blocks


def _field(record, name, kind, path, line_no):
    if name not in record:
        raise CorpusError(f"{path} line {line_no}: record missing field {name!r}")
    value = record[name]
    if not isinstance(value, kind):
        raise CorpusError(f"{path} line {line_no} (doc {record.get('doc_id', '?')}): "
                          f"field {name!r} has the wrong type")
    return value


def _build_document(record, schema, parse_blocks, tree_blocks, path, line_no):
    doc_id = _field(record, "doc_id", str, path, line_no)
    raw_sentences = _field(record, "sentences", list, path, line_no)
    raw_entities = _field(record, "entities", list, path, line_no)
    raw_labels = _field(record, "labels", list, path, line_no)
    if not raw_sentences:
        raise CorpusError(f"{path} line {line_no}: doc {doc_id} has no sentences")

    sentences = []
    global_index = 0
    for s_index, raw in enumerate(raw_sentences):
        if not isinstance(raw, list) or not raw:
            raise CorpusError(f"{path} line {line_no}: doc {doc_id} sentence {s_index} "
                              f"is not a non-empty token array")
        sentence = []
        for p_index, surface in enumerate(raw):
            if not isinstance(surface, str):
                raise CorpusError(f"{path} line {line_no}: doc {doc_id} sentence {s_index} "
                                  f"token {p_index} is not a string")
            sentence.append(Token(surface, s_index, p_index, global_index))
            global_index += 1
        sentences.append(tuple(sentence))
    offsets = []
    total = 0
    for sentence in sentences:
        offsets.append(total)
        total += len(sentence)

    entities = []
    for raw in raw_entities:
        if not isinstance(raw, dict) or "id" not in raw or "mentions" not in raw:
            raise CorpusError(f"{path} line {line_no}: doc {doc_id} entity record "
                              f"missing 'id' or 'mentions'")
        mentions = []
        for m in raw["mentions"]:
            try:
                sent, start, end = int(m["sent"]), int(m["start"]), int(m["end"])
            except (KeyError, TypeError, ValueError):
                raise CorpusError(f"{path} line {line_no}: doc {doc_id} entity {raw['id']} "
                                  f"has a malformed mention {m!r}") from None
            if not (0 <= sent < len(sentences)):
                raise CorpusError(f"{path} line {line_no}: doc {doc_id} entity {raw['id']} "
                                  f"mention sentence {sent} out of range")
            mentions.append(Mention(entity_id=int(raw["id"]), sentence_index=sent,
                                    start=offsets[sent] + start, end=offsets[sent] + end))
        entities.append(Entity(entity_id=int(raw["id"]), mentions=tuple(mentions),
                               type_label=str(raw.get("type", ""))))

    facts = []
    for raw in raw_labels:
        if not isinstance(raw, dict) or any(k not in raw for k in ("h", "t", "r")):
            raise CorpusError(f"{path} line {line_no}: doc {doc_id} label record "
                              f"missing 'h', 't', or 'r'")
        facts.append(RelationFact(
            subject_entity=int(raw["h"]), object_entity=int(raw["t"]),
            relation_label=schema.index_of(str(raw["r"])),
            evidence_sentences=tuple(int(e) for e in raw.get("evidence", []))))

    if doc_id not in parse_blocks:
        raise CorpusError(f"doc {doc_id}: no dependency parses in the .conllu file")
    parses, forms = parse_conllu(parse_blocks[doc_id])
    if len(parses) != len(sentences):
        raise CorpusError(f"doc {doc_id}: {len(parses)} dependency parses for "
                          f"{len(sentences)} sentences")
    for s_index, (sentence, sentence_forms) in enumerate(zip(sentences, forms)):
        if tuple(t.surface for t in sentence) != sentence_forms:
            raise CorpusError(f"doc {doc_id} sentence {s_index}: dependency FORM column "
                              f"does not match the corpus tokens")

    if doc_id not in tree_blocks:
        raise CorpusError(f"doc {doc_id}: no constituency trees in the .trees file")
    tree_lines = [line for line in tree_blocks[doc_id].splitlines() if line.strip()]
    if len(tree_lines) != len(sentences):
        raise CorpusError(f"doc {doc_id}: expected a constituency tree for each of "
                          f"{len(sentences)} sentences, found {len(tree_lines)} "
                          f"(first gap at sentence {min(len(tree_lines), len(sentences))})")
    trees = []
    for s_index, line in enumerate(tree_lines):
        try:
            trees.append(parse_bracketed_tree(
                line, sentence_tokens=[t.surface for t in sentences[s_index]],
                global_offset=offsets[s_index]))
        except CorpusError as exc:
            raise CorpusError(f"doc {doc_id} sentence {s_index}: {exc}") from None

    doc = AnnotatedDocument(doc_id=doc_id, sentences=tuple(sentences),
                            entities=tuple(entities), gold_facts=tuple(facts),
                            dependency_parses=tuple(parses), constituency_trees=tuple(trees))
    violations = validate_document(doc, schema)
    if violations:
        raise CorpusError(f"{path} line {line_no}: " + "; ".join(violations))
    return doc


def save_corpus(documents, path, schema: LabelSchema):
    """Write the record file and its parse siblings; inverse of load_corpus."""
    from .checkpoint import write_atomic

    conllu_path, trees_path = sibling_paths(path)
    records, conllu_parts, tree_parts = [], [], []
    for doc in documents:
        offsets = doc.sentence_offsets()
        entities = []
        for entity in doc.entities:
            mentions = [{"sent": m.sentence_index,
                         "start": m.start - offsets[m.sentence_index],
                         "end": m.end - offsets[m.sentence_index]} for m in entity.mentions]
            entities.append({"id": entity.entity_id, "type": entity.type_label,
                             "mentions": mentions})
        labels = [{"h": f.subject_entity, "t": f.object_entity,
                   "r": schema.name_of(f.relation_label),
                   "evidence": list(f.evidence_sentences)} for f in doc.gold_facts]
        records.append(json.dumps({
            "doc_id": doc.doc_id,
            "sentences": [[t.surface for t in sentence] for sentence in doc.sentences],
            "entities": entities,
            "labels": labels,
        }, sort_keys=True, separators=(",", ":")))

        conllu_parts.append(f"# newdoc id = {doc.doc_id}")
        for sentence, parse in zip(doc.sentences, doc.dependency_parses):
            for token, head, rel in zip(sentence, parse.heads, parse.deprels):
                conllu_parts.append("\t".join([
                    str(token.position_in_sentence + 1), token.surface, "_", "_", "_",
                    "_", str(head), rel, "_", "_"]))
            conllu_parts.append("")

        tree_parts.append(f"# newdoc id = {doc.doc_id}")
        for tree in doc.constituency_trees:
            tree_parts.append(format_tree(tree))
        tree_parts.append("")

    write_atomic(path, ("\n".join(records) + "\n").encode("utf-8"))
    write_atomic(conllu_path, ("\n".join(conllu_parts) + "\n").encode("utf-8"))
    write_atomic(trees_path, ("\n".join(tree_parts) + "\n").encode("utf-8"))
