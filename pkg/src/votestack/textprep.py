"""Social-media text normalization, slang dictionary and syllable tokenizer."""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from types import MappingProxyType

from .errors import FormatError

URL_RE = re.compile(r"(?:https?://|ftp://|www\.)\S+", re.IGNORECASE)
JOINER = "_"


@dataclass(frozen=True)
class PreprocessOptions:
    lowercase: bool = True
    strip_urls: bool = True
    strip_non_letters: bool = True
    collapse_whitespace: bool = True
    apply_dictionary: bool = True

    @classmethod
    def off(cls):
        return cls(False, False, False, False, False)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _keep(ch):
    if ch.isspace() or ch == JOINER or ch.isalpha():
        return True
    # combining marks survive so decomposed diacritics are not torn off their base letter
    return unicodedata.category(ch).startswith("M")


def normalize_text(text, options=PreprocessOptions()):
    """Apply URL removal, lowercasing, non-letter stripping and whitespace collapse, in that order."""
    if options.strip_urls:
        text = URL_RE.sub(" ", text)
    if options.lowercase:
        text = text.lower()
    if options.strip_non_letters:
        text = unicodedata.normalize("NFC", text)
        text = "".join(ch if _keep(ch) else " " for ch in text)
    if options.collapse_whitespace:
        text = " ".join(text.split())
    return text


class NormalizationDictionary:
    """Immutable whole-token variant -> canonical mapping."""

    def __init__(self, entries):
        clean = {}
        for variant, canonical in dict(entries).items():
            if not variant or variant != variant.lower() or any(c.isspace() for c in variant):
                raise FormatError(f"dictionary key {variant!r} must be lowercase and whitespace-free")
            if variant == canonical:
                raise FormatError(f"dictionary entry {variant!r} maps to itself")
            clean[variant] = canonical
        self.entries = MappingProxyType(clean)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, token):
        return token in self.entries

    def get(self, token, default=None):
        return self.entries.get(token, default)

    def sha256(self):
        payload = "\n".join(f"{k}\t{v}" for k, v in sorted(self.entries.items()))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_lines(cls, lines):
        entries = {}
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[1].strip():
                raise FormatError("expected 'variant<TAB>canonical'", line=lineno)
            variant = unicodedata.normalize("NFC", cols[0].strip())
            if variant in entries:
                raise FormatError(f"duplicate variant {variant!r}", line=lineno)
            entries[variant] = unicodedata.normalize("NFC", cols[1].strip())
        return cls(entries)

    @classmethod
    def load(cls, path):
        with Path(path).open(encoding="utf-8") as fh:
            return cls.from_lines(fh)

    @classmethod
    def builtin(cls):
        """The shipped seed dictionary (Table-2 style slang entries plus a few common ones)."""
        text = resources.files("votestack").joinpath("data/normalization_dict.tsv").read_text(encoding="utf-8")
        return cls.from_lines(text.splitlines())


def apply_dictionary(tokens, dictionary):
    out = []
    for tok in tokens:
        canonical = dictionary.get(tok)
        if canonical is None:
            out.append(tok)
        else:
            out.extend(canonical.split())
    return out


def load_lexicon(path):
    words = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = " ".join(line.split())
            if line and not line.startswith("#"):
                words.append(unicodedata.normalize("NFC", line))
    return words


class Lexicon:
    """Compound-word list keyed by syllable tuples, for greedy longest match."""

    def __init__(self, words):
        self.compounds = frozenset(tuple(w.split()) for w in words if len(w.split()) > 1)
        self.longest = max((len(c) for c in self.compounds), default=1)

    def sha256(self):
        payload = "\n".join(sorted(" ".join(c) for c in self.compounds))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def tokenize(text, lexicon=None):
    """Split on whitespace; with a lexicon, join the longest matching syllable runs with ``_``."""
    syllables = text.split()
    if lexicon is None:
        return syllables
    if not isinstance(lexicon, Lexicon):
        lexicon = Lexicon(lexicon)
    tokens = []
    i = 0
    while i < len(syllables):
        for span in range(min(lexicon.longest, len(syllables) - i), 1, -1):
            if tuple(syllables[i:i + span]) in lexicon.compounds:
                tokens.append(JOINER.join(syllables[i:i + span]))
                i += span
                break
        else:
            tokens.append(syllables[i])
            i += 1
    return tokens


def preprocess(text, options, dictionary=None, lexicon=None):
    """Full text -> token pipeline: normalize, dictionary lookup, then word segmentation."""
    tokens = normalize_text(text, options).split()
    if options.apply_dictionary and dictionary is not None:
        tokens = apply_dictionary(tokens, dictionary)
    return tokenize(" ".join(tokens), lexicon)
