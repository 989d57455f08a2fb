"""
Segment classification into the ten phonological feature categories and
per-(language, concept) level counts.

A token is normalized by stripping diacritics that do not change its category
levels, then matched against a base IPA chart. Raw IPA places, manners and
vowel qualities are collapsed onto the five-way / three-way level sets used by
the model.
"""
import csv
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class UnknownCategoryError(ValueError):
    pass


# ===== Level sets =====

VOICING = ('unvoiced', 'voiced')
POSITION = ('alveolar', 'glottal', 'labial', 'palatal', 'velar')
MANNER = ('continuant', 'lateral', 'nasal', 'stop', 'vibrant')
MANNER_VOICING = (
    'continuant unvoiced',
    'continuant voiced',
    'lateral voiced',
    'nasal voiced',
    'stop unvoiced',
    'stop voiced',
    'vibrant voiced',
)
POSITION_VOICING = tuple(f'{p} {v}' for p in POSITION for v in VOICING)
ROUNDEDNESS = ('rounded', 'unrounded')
HEIGHT = ('high', 'low', 'mid')
BACKNESS = ('back', 'central', 'front')
EXTREME = ('high-back', 'high-front', 'low-back', 'low-front')
EXTREME_ROUNDEDNESS = tuple(f'{e}-{r}' for e in EXTREME for r in ROUNDEDNESS)

# category name -> (sound class, ordered levels)
CATEGORIES: Dict[str, Tuple[str, Tuple[str, ...]]] = {
    'voicing': ('consonant', VOICING),
    'manner': ('consonant', MANNER),
    'manner_voicing': ('consonant', MANNER_VOICING),
    'position': ('consonant', POSITION),
    'position_voicing': ('consonant', POSITION_VOICING),
    'backness': ('vowel', BACKNESS),
    'extreme': ('vowel', EXTREME),
    'extreme_roundedness': ('vowel', EXTREME_ROUNDEDNESS),
    'height': ('vowel', HEIGHT),
    'roundedness': ('vowel', ROUNDEDNESS),
}


def category_levels(category: str) -> Tuple[str, ...]:
    if category not in CATEGORIES:
        raise UnknownCategoryError(f"Unknown category '{category}'. Valid: {', '.join(CATEGORIES)}")
    return CATEGORIES[category][1]


# ===== Base IPA chart =====

# consonant -> (voicing, raw place, raw manner)
CONSONANTS: Dict[str, Tuple[str, str, str]] = {
    # stops
    'p': ('unvoiced', 'bilabial', 'stop'), 'b': ('voiced', 'bilabial', 'stop'),
    't': ('unvoiced', 'alveolar', 'stop'), 'd': ('voiced', 'alveolar', 'stop'),
    'ʈ': ('unvoiced', 'retroflex', 'stop'), 'ɖ': ('voiced', 'retroflex', 'stop'),
    'c': ('unvoiced', 'palatal', 'stop'), 'ɟ': ('voiced', 'palatal', 'stop'),
    'k': ('unvoiced', 'velar', 'stop'), 'g': ('voiced', 'velar', 'stop'), 'ɡ': ('voiced', 'velar', 'stop'),
    'q': ('unvoiced', 'uvular', 'stop'), 'ɢ': ('voiced', 'uvular', 'stop'),
    'ʔ': ('unvoiced', 'glottal', 'stop'), 'ʡ': ('unvoiced', 'epiglottal', 'stop'),
    # implosives
    'ɓ': ('voiced', 'bilabial', 'implosive'), 'ɗ': ('voiced', 'alveolar', 'implosive'),
    'ʄ': ('voiced', 'palatal', 'implosive'), 'ɠ': ('voiced', 'velar', 'implosive'),
    'ʛ': ('voiced', 'uvular', 'implosive'),
    # nasals
    'm': ('voiced', 'bilabial', 'nasal'), 'ɱ': ('voiced', 'labiodental', 'nasal'),
    'n': ('voiced', 'alveolar', 'nasal'), 'ɳ': ('voiced', 'retroflex', 'nasal'),
    'ɲ': ('voiced', 'palatal', 'nasal'), 'ŋ': ('voiced', 'velar', 'nasal'),
    'ɴ': ('voiced', 'uvular', 'nasal'),
    # trills and taps
    'ʙ': ('voiced', 'bilabial', 'trill'), 'r': ('voiced', 'alveolar', 'trill'),
    'ʀ': ('voiced', 'uvular', 'trill'), 'ⱱ': ('voiced', 'labiodental', 'tap'),
    'ɾ': ('voiced', 'alveolar', 'tap'), 'ɽ': ('voiced', 'retroflex', 'tap'),
    # fricatives
    'ɸ': ('unvoiced', 'bilabial', 'fricative'), 'β': ('voiced', 'bilabial', 'fricative'),
    'f': ('unvoiced', 'labiodental', 'fricative'), 'v': ('voiced', 'labiodental', 'fricative'),
    'θ': ('unvoiced', 'dental', 'fricative'), 'ð': ('voiced', 'dental', 'fricative'),
    's': ('unvoiced', 'alveolar', 'sibilant fricative'), 'z': ('voiced', 'alveolar', 'sibilant fricative'),
    'ʃ': ('unvoiced', 'post-alveolar', 'sibilant fricative'), 'ʒ': ('voiced', 'post-alveolar', 'sibilant fricative'),
    'ʂ': ('unvoiced', 'retroflex', 'sibilant fricative'), 'ʐ': ('voiced', 'retroflex', 'sibilant fricative'),
    'ɕ': ('unvoiced', 'alveolo-palatal', 'sibilant fricative'), 'ʑ': ('voiced', 'alveolo-palatal', 'sibilant fricative'),
    'ç': ('unvoiced', 'palatal', 'fricative'), 'ʝ': ('voiced', 'palatal', 'fricative'),
    'x': ('unvoiced', 'velar', 'fricative'), 'ɣ': ('voiced', 'velar', 'fricative'),
    'χ': ('unvoiced', 'uvular', 'fricative'), 'ʁ': ('voiced', 'uvular', 'fricative'),
    'ħ': ('unvoiced', 'pharyngeal', 'fricative'), 'ʕ': ('voiced', 'pharyngeal', 'fricative'),
    'ʜ': ('unvoiced', 'epiglottal', 'fricative'), 'ʢ': ('voiced', 'epiglottal', 'fricative'),
    'h': ('unvoiced', 'glottal', 'fricative'), 'ɦ': ('voiced', 'glottal', 'fricative'),
    'ɧ': ('unvoiced', 'velar', 'fricative'), 'ʍ': ('unvoiced', 'labio-velar', 'fricative'),
    'ɬ': ('unvoiced', 'alveolar', 'lateral fricative'), 'ɮ': ('voiced', 'alveolar', 'lateral fricative'),
    # approximants and glides
    'ʋ': ('voiced', 'labiodental', 'approximant'), 'ɹ': ('voiced', 'alveolar', 'approximant'),
    'ɻ': ('voiced', 'retroflex', 'approximant'), 'j': ('voiced', 'palatal', 'glide'),
    'ɰ': ('voiced', 'velar', 'approximant'), 'w': ('voiced', 'labio-velar', 'glide'),
    'ɥ': ('voiced', 'palatal', 'glide'),
    # lateral approximants
    'l': ('voiced', 'alveolar', 'lateral approximant'), 'ɭ': ('voiced', 'retroflex', 'lateral approximant'),
    'ʎ': ('voiced', 'palatal', 'lateral approximant'), 'ʟ': ('voiced', 'velar', 'lateral approximant'),
}

# vowel -> (raw height, raw backness, rounded)
VOWELS: Dict[str, Tuple[str, str, bool]] = {
    'i': ('close', 'front', False), 'y': ('close', 'front', True),
    'ɨ': ('close', 'central', False), 'ʉ': ('close', 'central', True),
    'ɯ': ('close', 'back', False), 'u': ('close', 'back', True),
    'ɪ': ('near-close', 'near-front', False), 'ʏ': ('near-close', 'near-front', True),
    'ʊ': ('near-close', 'near-back', True),
    'e': ('close-mid', 'front', False), 'ø': ('close-mid', 'front', True),
    'ɘ': ('close-mid', 'central', False), 'ɵ': ('close-mid', 'central', True),
    'ɤ': ('close-mid', 'back', False), 'o': ('close-mid', 'back', True),
    'ə': ('mid', 'central', False), 'ɚ': ('mid', 'central', False),
    'ɛ': ('open-mid', 'front', False), 'œ': ('open-mid', 'front', True),
    'ɜ': ('open-mid', 'central', False), 'ɝ': ('open-mid', 'central', False),
    'ɞ': ('open-mid', 'central', True),
    'ʌ': ('open-mid', 'back', False), 'ɔ': ('open-mid', 'back', True),
    'æ': ('near-open', 'front', False), 'ɐ': ('near-open', 'central', False),
    'a': ('open', 'front', False), 'ɶ': ('open', 'front', True),
    'ɑ': ('open', 'back', False), 'ɒ': ('open', 'back', True),
}

POSITION_COLLAPSE = {
    'bilabial': 'labial', 'labiodental': 'labial',
    'dental': 'alveolar', 'alveolar': 'alveolar', 'post-alveolar': 'alveolar',
    'retroflex': 'alveolar', 'alveolo-palatal': 'alveolar',
    'palatal': 'palatal',
    'velar': 'velar', 'uvular': 'velar', 'labio-velar': 'velar',
    'glottal': 'glottal', 'pharyngeal': 'glottal', 'epiglottal': 'glottal',
}
MANNER_COLLAPSE = {
    'fricative': 'continuant', 'sibilant fricative': 'continuant',
    'approximant': 'continuant', 'glide': 'continuant',
    'lateral approximant': 'lateral', 'lateral fricative': 'lateral',
    'nasal': 'nasal',
    'stop': 'stop', 'affricate': 'stop', 'implosive': 'stop',
    'trill': 'vibrant', 'tap': 'vibrant',
}
HEIGHT_COLLAPSE = {
    'close': 'high', 'near-close': 'high',
    'close-mid': 'mid', 'mid': 'mid', 'open-mid': 'mid',
    'near-open': 'low', 'open': 'low',
}
# two-way split used by the extreme categories; true mid has no entry
EXTREME_HEIGHT = {
    'close': 'high', 'near-close': 'high', 'close-mid': 'high',
    'open-mid': 'low', 'near-open': 'low', 'open': 'low',
}
BACKNESS_COLLAPSE = {
    'front': 'front', 'near-front': 'front',
    'central': 'central',
    'back': 'back', 'near-back': 'back',
}

SONORANT_MANNERS = {'lateral', 'nasal', 'vibrant'}

# ===== Diacritics =====

VOICELESS_MARKS = {'̥', '̊'}       # ring below / above
VOICED_MARKS = {'̬'}                    # caron below
LABIALIZATION = {'ʷ'}
TIE_BARS = {'͡', '͜'}
IGNORED_MARKS = {
    'ʰ', 'ʱ', 'ː', 'ˑ', 'ʲ', 'ˠ', 'ˤ', 'ˀ', 'ʼ', 'ⁿ', 'ˡ', '˞', '̆', '̚',
    '̃',  # nasalized
    '̤',  # breathy
    '̰',  # creaky
    '̩', '̍',  # syllabic
    '̯', '̑',  # non-syllabic
    '̪', '̺', '̻', '̟', '̠', '̝', '̞',
    '̘', '̙', '̹', '̜', '̈', '̽', '̴',
    '̀', '́', '̂', '̄', '̌', '̋', '̏',
}


@dataclass(frozen=True)
class SegmentProfile:
    """Feature levels of one segment token; fields of the other sound class are None."""
    token: str
    sound_class: str
    base: str = ''
    voicing: Optional[str] = None
    position: Optional[str] = None
    manner: Optional[str] = None
    roundedness: Optional[str] = None
    height: Optional[str] = None
    backness: Optional[str] = None
    extreme: Optional[str] = None

    @property
    def manner_voicing(self) -> Optional[str]:
        if self.manner is None:
            return None
        return f'{self.manner} {self.voicing}'

    @property
    def position_voicing(self) -> Optional[str]:
        if self.position is None:
            return None
        return f'{self.position} {self.voicing}'

    @property
    def extreme_roundedness(self) -> Optional[str]:
        if self.extreme is None:
            return None
        return f'{self.extreme}-{self.roundedness}'

    def level(self, category: str) -> Optional[str]:
        """Level of this segment for a category, or None when it does not apply."""
        sound_class, _ = CATEGORIES[category]
        if sound_class != self.sound_class:
            return None
        return getattr(self, category)


MAPPING_COLUMNS = [f.name for f in fields(SegmentProfile) if f.name != 'token']


def _strip(token: str) -> Tuple[str, Optional[str], bool]:
    """Split a token into base characters, voicing override and labialization."""
    decomposed = unicodedata.normalize('NFD', token)
    kept = []
    voicing = None
    labialized = False
    for ch in decomposed:
        if ch in VOICELESS_MARKS:
            voicing = 'unvoiced'
        elif ch in VOICED_MARKS:
            voicing = 'voiced'
        elif ch in LABIALIZATION:
            labialized = True
        elif ch in TIE_BARS or ch in IGNORED_MARKS:
            continue
        else:
            kept.append(ch)
    return unicodedata.normalize('NFC', ''.join(kept)), voicing, labialized


def _consonant(token: str, base: str, voicing_mark, labialized, voicing, place, manner) -> SegmentProfile:
    if voicing_mark:
        voicing = voicing_mark
    position = 'labial' if labialized else POSITION_COLLAPSE[place]
    manner = MANNER_COLLAPSE[manner]
    if manner in SONORANT_MANNERS and voicing != 'voiced':
        logger.debug(f"Sonorant '{token}' counted as voiced")
        voicing = 'voiced'
    return SegmentProfile(token=token, sound_class='consonant', base=base,
                          voicing=voicing, position=position, manner=manner)


def _vowel(token: str, base: str) -> SegmentProfile:
    raw_height, raw_backness, rounded = VOWELS[base[0]]
    backness = BACKNESS_COLLAPSE[raw_backness]
    extreme = None
    if raw_backness != 'central' and raw_height in EXTREME_HEIGHT:
        extreme = f'{EXTREME_HEIGHT[raw_height]}-{backness}'
    return SegmentProfile(
        token=token, sound_class='vowel', base=base[0],
        roundedness='rounded' if rounded else 'unrounded',
        height=HEIGHT_COLLAPSE[raw_height],
        backness=backness,
        extreme=extreme,
    )


def _classify(token: str) -> SegmentProfile:
    base, voicing_mark, labialized = _strip(token)
    if not base:
        return SegmentProfile(token=token, sound_class='other')

    if all(ch in VOWELS for ch in base):
        if len(base) > 1:
            logger.debug(f"Diphthong '{token}' classified by its first vowel")
        return _vowel(token, base)

    if all(ch in CONSONANTS for ch in base):
        if len(base) == 1:
            return _consonant(token, base, voicing_mark, labialized, *CONSONANTS[base])

        first, second = CONSONANTS[base[0]], CONSONANTS[base[1]]
        if len(base) == 2 and first[2] == 'stop' and 'fricative' in second[2]:
            # affricate: voicing of the closure, place of the release
            return _consonant(token, base, voicing_mark, labialized, first[0], second[1], 'affricate')
        if len(base) == 2 and first[2] == 'nasal' and second[2] in ('stop', 'implosive'):
            # prenasalized stop
            return _consonant(token, base, voicing_mark, labialized, *second)
        if len(base) == 2 and first[2] == 'stop' and second[2] == 'stop' and first[1] != second[1]:
            # doubly articulated stop (kp, gb)
            return _consonant(token, base, voicing_mark, labialized, first[0], 'labio-velar', 'stop')
        if len(set(base)) == 1:
            return _consonant(token, base[0], voicing_mark, labialized, *first)

    return SegmentProfile(token=token, sound_class='other', base=base)


@lru_cache(maxsize=65536)
def _classify_cached(token: str) -> SegmentProfile:
    return _classify(token)


def classify_segment(token: str, mapping: Optional[Dict[str, SegmentProfile]] = None) -> SegmentProfile:
    """Classify one segment token.

    Args:
        token: Segment string (IPA-like)
        mapping: Optional override table (token -> profile), e.g. from load_mapping

    Returns:
        SegmentProfile; unknown tokens get sound_class 'other'
    """
    if not token:
        raise ValueError("Empty segment token")
    if mapping is not None and token in mapping:
        return mapping[token]
    return _classify_cached(token)


# ===== Mapping import / export =====

def export_mapping(tokens, path, mapping: Optional[Dict[str, SegmentProfile]] = None) -> Path:
    """Write token,sound_class,... rows for the given tokens."""
    path = Path(path)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['token'] + MAPPING_COLUMNS)
        for token in sorted(set(tokens)):
            profile = classify_segment(token, mapping)
            writer.writerow([token] + [getattr(profile, c) or '' for c in MAPPING_COLUMNS])
    return path


def load_mapping(path) -> Dict[str, SegmentProfile]:
    """Load an override mapping; empty cells mean 'not applicable'."""
    mapping = {}
    with open(path, 'r', encoding='utf-8', newline='') as f:
        for line, row in enumerate(csv.DictReader(f), start=2):
            token = row.get('token', '')
            if not token:
                raise ValueError(f"{path} line {line}: empty token")
            values = {c: (row.get(c) or None) for c in MAPPING_COLUMNS}
            if values['sound_class'] not in ('consonant', 'vowel', 'other'):
                raise ValueError(f"{path} line {line}: bad sound_class '{values['sound_class']}'")
            for column, (_, levels) in CATEGORIES.items():
                value = values.get(column)
                if value is not None and value not in levels:
                    raise ValueError(f"{path} line {line}: bad {column} '{value}'")
            values['base'] = values['base'] or ''
            profile = SegmentProfile(token=token, **values)
            for category, (_, levels) in CATEGORIES.items():
                level = profile.level(category)
                if level is not None and level not in levels:
                    raise ValueError(f"{path} line {line}: bad {category} '{level}'")
            mapping[token] = profile
    logger.info(f"Loaded {len(mapping)} segment overrides from {path}")
    return mapping


# ===== Counting =====

@dataclass(frozen=True, eq=False)
class CategoryCountTable:
    """Level counts per (language, concept) row for one category."""
    category: str
    levels: Tuple[str, ...]
    language_ids: Tuple[str, ...]
    concept_ids: Tuple[str, ...]
    counts: np.ndarray

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n_rows(self) -> int:
        return self.counts.shape[0]

    def to_frame(self):
        import pandas as pd

        frame = pd.DataFrame(self.counts, columns=list(self.levels))
        frame.insert(0, 'concept_id', list(self.concept_ids))
        frame.insert(0, 'language_id', list(self.language_ids))
        frame['total'] = self.totals
        return frame

    def write_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, lineterminator='\n')
        return path

    @classmethod
    def read_csv(cls, path, category: str) -> 'CategoryCountTable':
        import pandas as pd

        levels = category_levels(category)
        frame = pd.read_csv(path, dtype={'language_id': str, 'concept_id': str}, keep_default_na=False)
        missing = [lvl for lvl in levels if lvl not in frame.columns]
        if missing:
            raise ValueError(f"{path} lacks level columns {missing} for category {category}")
        return cls(
            category=category,
            levels=levels,
            language_ids=tuple(frame['language_id']),
            concept_ids=tuple(frame['concept_id']),
            counts=frame[list(levels)].to_numpy(dtype=np.int64),
        )


def count_features(corpus, category: str, mapping: Optional[Dict[str, SegmentProfile]] = None) -> CategoryCountTable:
    """Aggregate level counts over all forms of each (language, concept) pair.

    Rows whose forms contain no segment of the category's sound class are omitted.
    Rows follow corpus language order, then concept order.
    """
    levels = category_levels(category)
    level_index = {lvl: k for k, lvl in enumerate(levels)}
    tallies: Dict[Tuple[int, int], np.ndarray] = {}
    unknown = Counter()

    for form in corpus.forms:
        key = (corpus.language_index[form.language_id], corpus.concept_index[form.concept_id])
        for token in form.segments:
            profile = classify_segment(token, mapping)
            if profile.sound_class == 'other':
                unknown[token] += 1
                continue
            level = profile.level(category)
            if level is None:
                continue
            row = tallies.get(key)
            if row is None:
                row = tallies[key] = np.zeros(len(levels), dtype=np.int64)
            row[level_index[level]] += 1

    if unknown:
        top = ', '.join(f"'{t}' x{n}" for t, n in unknown.most_common(10))
        logger.info(f"{sum(unknown.values())} unclassified segments ({len(unknown)} types), most common: {top}")

    keys = sorted(tallies)
    counts = np.array([tallies[k] for k in keys], dtype=np.int64).reshape(len(keys), len(levels))
    table = CategoryCountTable(
        category=category,
        levels=levels,
        language_ids=tuple(corpus.languages[i].id for i, _ in keys),
        concept_ids=tuple(corpus.concepts[j].id for _, j in keys),
        counts=counts,
    )
    logger.info(f"Counted {category}: {table.n_rows} (language, concept) rows over {len(levels)} levels")
    return table


def to_proportions(table, n_rows: Optional[int] = None) -> np.ndarray:
    """Compress count rows into the open simplex.

    y' = (y * (n - 1) + 1 / K) / n with y = count / total, K levels and n rows.

    Args:
        table: CategoryCountTable or an (n, K) count array
        n_rows: Row count used in the compression; defaults to the table's row count

    Returns:
        (n, K) array of strictly interior proportions
    """
    counts = table.counts if isinstance(table, CategoryCountTable) else np.asarray(table, dtype=float)
    counts = np.atleast_2d(counts).astype(float)
    n = counts.shape[0] if n_rows is None else n_rows
    if n < 2:
        raise ValueError(f"Proportion compression needs at least 2 rows, got {n}")
    totals = counts.sum(axis=1, keepdims=True)
    if np.any(totals < 1):
        raise ValueError("Every row needs a total of at least 1")
    k = counts.shape[1]
    y = counts / totals
    return (y * (n - 1) + 1.0 / k) / n
