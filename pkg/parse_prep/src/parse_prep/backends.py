"""Parser backends.

A backend turns one pre-tokenized sentence into a dependency parse (head
indices, 0 for the root, plus relation labels) and a bracketed
constituency tree whose leaves are exactly the given tokens. Backends must
never re-tokenize: the caller rejects any output whose leaf or token count
differs from the input.
"""

from __future__ import annotations


class ParseFailure(Exception):
    """The backend could not produce aligned parses for a sentence."""


class ChainBackend:
    """Deterministic built-in fallback: no model downloads, no randomness.

    Dependencies form a chain rooted at the first token; the constituency
    tree is the matching right-branching binary bracketing. Linguistically
    naive, but structurally valid, stable across runs, and alignment-safe,
    which is all the downstream contracts require.
    """

    name = "chain"

    def parse(self, tokens):
        heads = [0 if i == 0 else i for i in range(len(tokens))]
        deprels = ["root" if i == 0 else "dep" for i in range(len(tokens))]
        tree = f"(T {escape_leaf(tokens[-1])})"
        for token in reversed(tokens[:-1]):
            tree = f"(X (T {escape_leaf(token)}) {tree})"
        return heads, deprels, f"(S {tree})"


class StanzaBackend:
    """Neural parses via the stanza pipeline, in pre-tokenized mode.

    Requires the `stanza` package and a downloaded model; both sentence
    splitting and tokenization are disabled so the given tokens pass
    through unchanged.
    """

    name = "stanza"

    def __init__(self, language="en"):
        try:
            import stanza
        except ImportError as exc:
            raise ParseFailure(
                "the stanza backend needs the 'stanza' package (pip install "
                "parse-prep[stanza]) and a downloaded model") from exc
        self._pipeline = stanza.Pipeline(
            language, processors="tokenize,pos,lemma,depparse,constituency",
            tokenize_pretokenized=True, verbose=False)

    def parse(self, tokens):
        document = self._pipeline([list(tokens)])
        sentence = document.sentences[0]
        if len(sentence.words) != len(tokens):
            raise ParseFailure(
                f"stanza produced {len(sentence.words)} words for "
                f"{len(tokens)} tokens")
        heads = [word.head for word in sentence.words]
        deprels = [word.deprel for word in sentence.words]
        return heads, deprels, str(sentence.constituency)


_TREE_ESCAPES = (("(", "-LRB-"), (")", "-RRB-"), (" ", "-SP-"), ("\t", "-TAB-"))


def escape_leaf(surface):
    for raw, escaped in _TREE_ESCAPES:
        surface = surface.replace(raw, escaped)
    return surface


BACKENDS = {
    ChainBackend.name: ChainBackend,
    StanzaBackend.name: StanzaBackend,
}


def make_backend(name):
    if name not in BACKENDS:
        raise ParseFailure(f"unknown backend {name!r}; available: "
                           + ", ".join(sorted(BACKENDS)))
    return BACKENDS[name]()
