"""Trigger-word lexicons, first-sentence detection and score refinement.

A trigger of a type is a surface string whose presence in a person's description
signals the type: base form, plural, synonyms and hyponyms for professions;
country name, adjectival form and manual additions for nationalities.

Refinement of an ensemble score s for a triple:

    i.  a trigger occurs in the first sentence and s < 5   ->  5
    ii. no trigger occurs in the description and s > 2      ->  2   (nationality only)
"""
import logging
import os
import re
from dataclasses import dataclass

import numpy as np

from .corpus import TargetRelation, data_path
from .errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

UPGRADE_SCORE = 5
DOWNGRADE_SCORE = 2

_INITIAL = re.compile(r"^(?:[^\W\d_]\.)+$")
_CAMEL = re.compile(r"(?<=[a-z])(?=[A-Z])|_+|-+")


def pluralize(term):
    """plural of the last word of ``term``"""
    head, _, word = term.rpartition(" ")
    if not word:
        return term
    if word.endswith(("s", "x", "z", "ch", "sh")):
        plural = word + "es"
    elif word.endswith("y") and len(word) > 1 and word[-2] not in "aeiou":
        plural = word[:-1] + "ies"
    else:
        plural = word + "s"
    return f"{head} {plural}" if head else plural


def base_term(type_id):
    """readable base term of a type id, e.g. FilmDirector -> film director"""
    return " ".join(part for part in _CAMEL.split(type_id) if part).lower()


class TriggerLexicon:
    """Per type: frozen set of lowercase trigger strings

    Whole-word, case-insensitive patterns are compiled lazily per type.
    """

    def __init__(self, triggers):
        self.triggers = {t: frozenset(words) for t, words in triggers.items()}
        self._patterns = {}

    def __contains__(self, type_id):
        return type_id in self.triggers

    def __getitem__(self, type_id):
        return self.triggers[type_id]

    @property
    def type_ids(self):
        return tuple(sorted(self.triggers))

    def pattern(self, type_id):
        if type_id not in self._patterns:
            words = sorted(self.triggers[type_id], key=lambda w: (-len(w), w))
            if words:
                alternatives = "|".join(re.escape(w) for w in words)
                self._patterns[type_id] = re.compile(
                    rf"(?<!\w)(?:{alternatives})(?!\w)", re.IGNORECASE
                )
            else:
                self._patterns[type_id] = None
        return self._patterns[type_id]


def build_lexicon(base_terms, synonym_map=None, hyponym_map=None, manual_additions=None,
                  pluralize_terms=True):
    """Union base terms, synonyms and hyponyms (with plurals) and manual additions.

    Arguments
    ---------
    base_terms : dict of type id -> list of str
        every type needs at least one base term
    synonym_map, hyponym_map, manual_additions : dict of type id -> list of str
    pluralize_terms : bool
        add plural forms of base terms, synonyms and hyponyms; nationality
        lexicons are built without plurals

    Raises
    ------
    ValidationError
        naming the first type without a base term
    """
    synonym_map = synonym_map or {}
    hyponym_map = hyponym_map or {}
    manual_additions = manual_additions or {}
    triggers = {}
    for type_id in sorted(base_terms):
        bases = [b.strip().lower() for b in base_terms[type_id] if b and b.strip()]
        if not bases:
            raise ValidationError(f"type {type_id} has no base term")
        words = set()
        for term in bases + [
            w.strip().lower()
            for w in list(synonym_map.get(type_id, ())) + list(hyponym_map.get(type_id, ()))
            if w.strip()
        ]:
            words.add(term)
            if pluralize_terms:
                words.add(pluralize(term))
        words.update(w.strip().lower() for w in manual_additions.get(type_id, ()) if w.strip())
        triggers[type_id] = words
    return TriggerLexicon(triggers)


def read_term_map(path, type_ids=None):
    """read type_id<TAB>term lines into type id -> list of terms"""
    terms = {}
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise FormatError(path, line_number, "expected type_id<TAB>term")
            if type_ids is None or fields[0] in type_ids:
                terms.setdefault(fields[0], []).append(fields[1])
    return terms


def write_lexicon(path, lexicon):
    with open(path, "w", encoding="utf-8") as handle:
        for type_id in lexicon.type_ids:
            for word in sorted(lexicon[type_id]):
                handle.write(f"{type_id}\t{word}\n")


def read_lexicon(path):
    return TriggerLexicon(read_term_map(path))


def load_lexicon_assets(relation, type_ids, synonyms=None, hyponyms=None, adjectives=None,
                        manual=None, base_terms=None):
    """Assemble the lexicon of a relation from the shipped (or overriding) term files.

    Profession lexicons use synonyms.tsv and hyponyms.tsv with plurals; nationality
    lexicons use nationality_adjectives.tsv and nationality_manual.tsv without
    plurals. Base terms come from ``base_terms`` (a term file) or the type ids.
    """
    relation = TargetRelation.parse(relation)
    type_ids = set(type_ids)
    bases = {t: [base_term(t)] for t in type_ids}
    if base_terms:
        for t, terms in read_term_map(base_terms, type_ids).items():
            bases[t] = terms
    if relation is TargetRelation.PROFESSION:
        return build_lexicon(
            bases,
            read_term_map(synonyms or os.path.join(data_path, "synonyms.tsv"), type_ids),
            read_term_map(hyponyms or os.path.join(data_path, "hyponyms.tsv"), type_ids),
        )
    manual_terms = read_term_map(
        adjectives or os.path.join(data_path, "nationality_adjectives.tsv"), type_ids
    )
    for t, terms in read_term_map(
        manual or os.path.join(data_path, "nationality_manual.tsv"), type_ids
    ).items():
        manual_terms.setdefault(t, []).extend(terms)
    return build_lexicon(bases, manual_additions=manual_terms, pluralize_terms=False)


def load_abbreviations(path=None):
    if path is None:
        path = os.path.join(data_path, "abbreviations.txt")
    with open(path, encoding="utf-8") as handle:
        return frozenset(
            line.strip().lower() for line in handle if line.strip() and not line.startswith("#")
        )


_DEFAULT_ABBREVIATIONS = None


def _default_abbreviations():
    global _DEFAULT_ABBREVIATIONS
    if _DEFAULT_ABBREVIATIONS is None:
        _DEFAULT_ABBREVIATIONS = load_abbreviations()
    return _DEFAULT_ABBREVIATIONS


def _ends_with_abbreviation(prefix, abbreviations):
    token = prefix.split()[-1].lstrip("([{\"'").lower()
    return token in abbreviations or bool(_INITIAL.match(token))


def split_first_sentence(description, abbreviations=None):
    """Split a description after its first sentence.

    A sentence ends at '.', '!' or '?' followed by whitespace and an uppercase
    letter, or by the end of the text. A '.' closing an abbreviation from the list
    or an initial such as "J." or "U.S." does not end a sentence.

    Returns
    -------
    (first, rest) : tuple of str
        ``first`` is a prefix of ``description``; rest has its leading space removed
    """
    if abbreviations is None:
        abbreviations = _default_abbreviations()
    for match in re.finditer(r"[.!?]", description):
        end = match.end()
        rest = description[end:]
        following = rest.lstrip()
        if following:
            if not rest[0].isspace() or not following[0].isupper():
                continue
        if match.group() == "." and _ends_with_abbreviation(description[:end], abbreviations):
            continue
        return description[:end], following
    return description, ""


@dataclass(frozen=True)
class PersonDescription:
    person: str
    description: str
    first_sentence: str

    @classmethod
    def from_text(cls, person, description, abbreviations=None):
        first, _ = split_first_sentence(description, abbreviations)
        return cls(person, description, first)


def detect(lexicon, type_id, text):
    """True iff a trigger of ``type_id`` occurs in ``text`` as a whole word"""
    if type_id not in lexicon:
        raise ValidationError(f"type {type_id} has no trigger lexicon")
    if not text:
        return False
    pattern = lexicon.pattern(type_id)
    return pattern is not None and pattern.search(text) is not None


def trigger_flags(lexicon, type_id, description):
    """(in_first_sentence, in_description) for one triple; (False, False) without a
    description or for a type missing from the lexicon"""
    if description is None or type_id not in lexicon:
        return False, False
    in_description = detect(lexicon, type_id, description.description)
    in_first = in_description and detect(lexicon, type_id, description.first_sentence)
    return in_first, in_description


def _check_flags(in_first_sentence, in_description):
    if in_first_sentence and not in_description:
        raise ValidationError("a first-sentence trigger must also count as a description trigger")


def refine(ensemble_score, relation, in_first_sentence, in_description):
    """Raise a first-sentence hit to 5, then cap a nationality missing from the description at 2"""
    relation = TargetRelation.parse(relation)
    _check_flags(in_first_sentence, in_description)
    if not 0 <= ensemble_score <= 7:
        raise ValidationError(f"score {ensemble_score} outside 0..7")
    score = int(ensemble_score)
    if in_first_sentence and score < UPGRADE_SCORE:
        score = UPGRADE_SCORE
    if relation is TargetRelation.NATIONALITY and not in_description and score > DOWNGRADE_SCORE:
        score = DOWNGRADE_SCORE
    return score


def twd_alone(relation, in_first_sentence, in_description, seed):
    """Score from trigger detection only: 5, 2, or a seeded fair choice of 3 and 4"""
    TargetRelation.parse(relation)
    _check_flags(in_first_sentence, in_description)
    if in_first_sentence:
        return UPGRADE_SCORE
    if not in_description:
        return DOWNGRADE_SCORE
    return 3 + int(np.random.default_rng(seed).integers(2))
