"""Readers and writers for every input file of the triple scorer.

File formats (all UTF-8, tab separated, one record per line, blank lines ignored):

    sentences     sentence_id<TAB>text<TAB>person:start:end<TAB>...
    kb            person_id<TAB>type_id
    gold          person_id<TAB>type_id<TAB>score
    descriptions  person_id<TAB>description
    kg triples    head<TAB>relation<TAB>tail
    scores        person_id<TAB>type_id<TAB>score    (score may be ABSTAIN)

Mention spans are byte offsets into the UTF-8 encoding of ``text``.
"""
import logging
import os
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

path_and_file = os.path.realpath(__file__)
data_path = os.path.join(os.path.dirname(path_and_file), "data")

ABSTAIN = "ABSTAIN"
MIN_SCORE = 0
MAX_SCORE = 7


class TargetRelation(str, Enum):
    """The two type-like relations a triple can come from"""

    PROFESSION = "profession"
    NATIONALITY = "nationality"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(
                f"unknown relation '{value}', expected one of "
                + ", ".join(r.value for r in cls)
            ) from None


@dataclass(frozen=True)
class Mention:
    person: str
    start: int
    end: int


@dataclass(frozen=True)
class AnnotatedSentence:
    sentence_id: int
    text: str
    mentions: tuple


@dataclass(frozen=True)
class AnnotatedCorpus:
    """All annotated sentences plus the set of persons mentioned in them"""

    sentences: tuple = ()
    persons: frozenset = frozenset()

    @property
    def total_mentions(self):
        return sum(len(s.mentions) for s in self.sentences)


@dataclass(frozen=True)
class AssociatedText:
    """Bag of lowercased, stoplist-filtered tokens from a person's sentences"""

    person: str
    token_counts: dict = field(default_factory=dict)

    @property
    def is_empty(self):
        return not self.token_counts


@dataclass(frozen=True)
class Popularity:
    person: str
    count: int


@dataclass(frozen=True)
class KbAssertion:
    person: str
    relation: TargetRelation
    type: str


@dataclass(frozen=True)
class GoldTriple:
    assertion: KbAssertion
    score: int

    @property
    def key(self):
        return (self.assertion.person, self.assertion.type)


@dataclass(frozen=True)
class ScoredTriple:
    """A (person, relation, type) triple with an integer score, or None if abstained"""

    person: str
    relation: TargetRelation
    type: str
    score: object

    @property
    def key(self):
        return (self.person, self.type)


def _is_punctuation(ch):
    return unicodedata.category(ch).startswith("P")


def tokenize(text):
    """Split on whitespace, strip surrounding punctuation and lowercase.

    Tokens that are empty or pure punctuation are dropped.
    """
    tokens = []
    for raw in text.split():
        start, end = 0, len(raw)
        while start < end and _is_punctuation(raw[start]):
            start += 1
        while end > start and _is_punctuation(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end].lower())
    return tokens


def load_stoplist(path=None):
    """read a stop list, one word per line; defaults to the shipped list"""
    if path is None:
        path = os.path.join(data_path, "stoplist.txt")
    with open(path, encoding="utf-8") as handle:
        return frozenset(
            line.strip().lower()
            for line in handle
            if line.strip() and not line.startswith("#")
        )


def _records(path):
    """yield (line_number, fields) for every non-blank line of a TSV file"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"input file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            yield line_number, line.split("\t")


def _parse_mention(path, line_number, raw, text_bytes):
    try:
        person, start, end = raw.rsplit(":", 2)
        start, end = int(start), int(end)
    except ValueError:
        raise FormatError(path, line_number, f"bad mention '{raw}'") from None
    if not person:
        raise FormatError(path, line_number, f"empty person id in mention '{raw}'")
    if not 0 <= start < end <= len(text_bytes):
        raise FormatError(
            path, line_number, f"mention span {start}:{end} out of bounds"
        )
    return Mention(person, start, end)


def _masked_text(path, line_number, text_bytes, mentions):
    """sentence text with every mention span blanked out"""
    masked = bytearray(text_bytes)
    for m in mentions:
        try:
            text_bytes[m.start:m.end].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(
                path, line_number, f"mention span {m.start}:{m.end} splits a character"
            ) from None
        masked[m.start:m.end] = b" " * (m.end - m.start)
    return masked.decode("utf-8")


def load_sentences(path, stoplist, persons=None):
    """Parse the annotated sentence file and aggregate per-person text.

    Arguments
    ---------
    path : str
        the sentences file
    stoplist : set of str
        tokens removed from associated text
    persons : set of str, optional
        the known person ids; when given, a mention of any other id is an error

    Returns
    -------
    corpus : AnnotatedCorpus
    texts : dict of person id -> AssociatedText
    popularity : dict of person id -> Popularity

    Notes
    -----
    A sentence's tokens are added once per distinct person mentioned in it,
    while popularity counts every mention. Tokens inside mention spans are not
    part of any associated text.
    """
    sentences = []
    token_counts = {}
    mention_counts = Counter()
    for line_number, fields in _records(path):
        if len(fields) < 2:
            raise FormatError(path, line_number, "expected sentence_id<TAB>text")
        try:
            sentence_id = int(fields[0])
        except ValueError:
            raise FormatError(
                path, line_number, f"sentence id '{fields[0]}' is not an integer"
            ) from None
        text = fields[1]
        text_bytes = text.encode("utf-8")
        mentions = tuple(
            _parse_mention(path, line_number, raw, text_bytes) for raw in fields[2:]
        )
        spans = sorted((m.start, m.end) for m in mentions)
        for (_, prev_end), (next_start, _) in zip(spans, spans[1:]):
            if next_start < prev_end:
                raise FormatError(path, line_number, "overlapping mention spans")
        for m in mentions:
            if persons is not None and m.person not in persons:
                raise FormatError(
                    path, line_number, f"unknown person id '{m.person}' in mention"
                )
            mention_counts[m.person] += 1
        sentences.append(AnnotatedSentence(sentence_id, text, mentions))

        masked = _masked_text(path, line_number, text_bytes, mentions)
        tokens = Counter(t for t in tokenize(masked) if t not in stoplist)
        for person in dict.fromkeys(m.person for m in mentions):
            token_counts.setdefault(person, Counter()).update(tokens)

    corpus = AnnotatedCorpus(tuple(sentences), frozenset(mention_counts))
    texts = {
        person: AssociatedText(person, dict(counts))
        for person, counts in sorted(token_counts.items())
    }
    popularity = {
        person: Popularity(person, count)
        for person, count in sorted(mention_counts.items())
    }
    logger.info(
        "loaded %d sentences mentioning %d persons from %s",
        len(sentences),
        len(popularity),
        path,
    )
    return corpus, texts, popularity


def load_kb(path, relation):
    """read a person<TAB>type file into deduplicated assertions in file order"""
    relation = TargetRelation.parse(relation)
    seen = set()
    assertions = []
    for line_number, fields in _records(path):
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise FormatError(
                path, line_number, f"expected 2 columns, found {len(fields)}"
            )
        assertion = KbAssertion(fields[0], relation, fields[1])
        if assertion not in seen:
            seen.add(assertion)
            assertions.append(assertion)
    return assertions


def write_kb(path, assertions):
    with open(path, "w", encoding="utf-8") as handle:
        for a in assertions:
            handle.write(f"{a.person}\t{a.type}\n")


def _parse_score(path, line_number, raw):
    try:
        score = int(raw)
    except ValueError:
        raise FormatError(path, line_number, f"score '{raw}' is not an integer") from None
    if not MIN_SCORE <= score <= MAX_SCORE:
        raise FormatError(
            path, line_number, f"score {score} outside [{MIN_SCORE}, {MAX_SCORE}]"
        )
    return score


def load_gold(path, relation):
    """read person<TAB>type<TAB>score lines; scores must lie in 0..7"""
    relation = TargetRelation.parse(relation)
    gold = []
    for line_number, fields in _records(path):
        if len(fields) != 3:
            raise FormatError(
                path, line_number, f"expected 3 columns, found {len(fields)}"
            )
        score = _parse_score(path, line_number, fields[2])
        gold.append(GoldTriple(KbAssertion(fields[0], relation, fields[1]), score))
    return gold


def load_descriptions(path):
    """read person<TAB>description lines; a repeated person overwrites with a warning"""
    descriptions = {}
    for line_number, fields in _records(path):
        if len(fields) < 2:
            raise FormatError(path, line_number, "expected person<TAB>description")
        person, text = fields[0], "\t".join(fields[1:])
        if person in descriptions:
            logger.warning(
                "%s:%d: duplicate description for %s, keeping the later one",
                path,
                line_number,
                person,
            )
        descriptions[person] = text
    return descriptions


def load_kg_triples(path, relation_blocklist=(), persons=None):
    """Read head<TAB>relation<TAB>tail triples.

    Triples whose relation starts with a blocklisted prefix are dropped, and when
    ``persons`` is given so are triples touching no known person.
    """
    triples = []
    dropped = 0
    for line_number, fields in _records(path):
        if len(fields) != 3 or not all(fields):
            raise FormatError(
                path, line_number, f"expected 3 columns, found {len(fields)}"
            )
        head, relation, tail = fields
        if any(relation.startswith(prefix) for prefix in relation_blocklist if prefix):
            dropped += 1
            continue
        if persons is not None and head not in persons and tail not in persons:
            dropped += 1
            continue
        triples.append((head, relation, tail))
    if dropped:
        logger.info("dropped %d KG triples by relation/person filters", dropped)
    return triples


def write_scores(path, triples):
    """write ScoredTriple records sorted by (person, type); None becomes ABSTAIN"""
    with open(path, "w", encoding="utf-8") as handle:
        for t in sorted(triples, key=lambda t: (t.person, t.type)):
            score = ABSTAIN if t.score is None else int(t.score)
            handle.write(f"{t.person}\t{t.type}\t{score}\n")


def load_scores(path, relation, column=2):
    """read a score/prediction file into ScoredTriples (ABSTAIN -> None)

    ``column`` selects the score field; raw score files keep the mapped score in
    column 3.
    """
    relation = TargetRelation.parse(relation)
    triples = []
    for line_number, fields in _records(path):
        if len(fields) <= column:
            raise FormatError(
                path, line_number, f"expected {column + 1} columns, found {len(fields)}"
            )
        raw = fields[column]
        score = None if raw == ABSTAIN else _parse_score(path, line_number, raw)
        triples.append(ScoredTriple(fields[0], relation, fields[1], score))
    return triples


def types_by_person(assertions):
    """group assertions into person -> tuple of types (file order)"""
    grouped = {}
    for a in assertions:
        grouped.setdefault(a.person, []).append(a.type)
    return {person: tuple(types) for person, types in grouped.items()}
