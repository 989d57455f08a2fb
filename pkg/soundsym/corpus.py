"""
Wordlist corpus ingestion, validation, filtering and summary statistics.

Three delimited tables are read, modeled on CLDF column names:

- languages: ID, Name, Glottocode, Latitude, Longitude, Macroarea, Family_Path
- concepts:  ID, Name, and optional Swadesh_100 / Tadmor_100 / Holman_40 flags
- forms:     Language_ID, Parameter_ID, Segments (whitespace-separated tokens)

Forms reference languages through the languages table's ID column; records are
keyed by glottocode once loaded.
"""
import gzip
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import pandas as pd

from soundsym import config

logger = logging.getLogger(__name__)

_GLOTTOCODE = re.compile(config.GLOTTOCODE_PATTERN)
_TRUE_FLAGS = {'1', 'true', 'yes', 'y', 't', 'x'}
_FALSE_FLAGS = {'', '0', 'false', 'no', 'n', 'f'}


class CorpusError(ValueError):
    """Fatal corpus problem (duplicate ids, unresolved references, empty result)."""


class CorpusRowError(CorpusError):
    """Validation failure tied to one input row."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class LanguageRecord:
    id: str
    name: str
    family_path: Tuple[str, ...]
    latitude: Optional[float]
    longitude: Optional[float]
    macroarea: str

    @property
    def has_coordinates(self) -> bool:
        return self.latitude is not None and self.longitude is not None

    @property
    def family(self) -> str:
        return self.family_path[0]


@dataclass(frozen=True)
class ConceptRecord:
    id: str
    gloss: str
    in_swadesh100: bool = False
    in_tadmor100: bool = False
    in_holman40: bool = False


@dataclass(frozen=True)
class FormRecord:
    language_id: str
    concept_id: str
    segments: Tuple[str, ...]


@dataclass(frozen=True)
class CorpusStats:
    n_languages: int
    n_forms: int
    n_phones: int
    vowel_share: Optional[float]


@dataclass(frozen=True)
class Corpus:
    """Immutable wordlist corpus: records in load order plus id lookups."""
    languages: Tuple[LanguageRecord, ...]
    concepts: Tuple[ConceptRecord, ...]
    forms: Tuple[FormRecord, ...]
    language_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    concept_index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'language_index', {lang.id: i for i, lang in enumerate(self.languages)})
        object.__setattr__(self, 'concept_index', {c.id: i for i, c in enumerate(self.concepts)})
        if len(self.language_index) != len(self.languages):
            raise CorpusError("Duplicate language ids in corpus")
        if len(self.concept_index) != len(self.concepts):
            raise CorpusError("Duplicate concept ids in corpus")
        for form in self.forms:
            if form.language_id not in self.language_index:
                raise CorpusError(f"Form references unknown language '{form.language_id}'")
            if form.concept_id not in self.concept_index:
                raise CorpusError(f"Form references unknown concept '{form.concept_id}'")

    def language(self, language_id: str) -> LanguageRecord:
        return self.languages[self.language_index[language_id]]

    def concept(self, concept_id: str) -> ConceptRecord:
        return self.concepts[self.concept_index[concept_id]]


# ===== Table reading =====

def _read_table(table, delimiter: str, required: Sequence[str], kind: str) -> pd.DataFrame:
    """Read a delimited table as strings (RFC 4180 quoting) and check required columns."""
    frame = pd.read_csv(table, sep=delimiter, dtype=str, keep_default_na=False, quotechar='"')
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise CorpusError(f"{kind} table is missing columns: {', '.join(missing)}")
    return frame


def _parse_coordinate(raw: str, name: str, bound: float, line: int) -> Optional[float]:
    raw = raw.strip()
    if not raw:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise CorpusRowError(line, f"{name} '{raw}' is not a number")
    if not -bound <= value <= bound:
        raise CorpusRowError(line, f"{name} {value} outside [-{bound}, {bound}]")
    return value


def _parse_flag(raw: str, name: str, line: int) -> bool:
    value = raw.strip().lower()
    if value in _TRUE_FLAGS:
        return True
    if value in _FALSE_FLAGS:
        return False
    raise CorpusRowError(line, f"{name} flag '{raw}' is not boolean")


def _handle(error: CorpusRowError, errors: Optional[List[CorpusRowError]]):
    if errors is None:
        raise error
    logger.warning(f"Skipping row: {error}")
    errors.append(error)


def parse_languages(table, delimiter: str = config.CSV_DELIMITER,
                    errors: Optional[List[CorpusRowError]] = None) -> List[LanguageRecord]:
    """Parse the languages table.

    Args:
        table: Path or file-like object holding the delimited table
        delimiter: Field delimiter
        errors: If given, row-level errors are appended here and the row is skipped;
            otherwise the first row-level error is raised

    Returns:
        One LanguageRecord per valid row, in table order
    """
    languages, _ = _parse_languages_with_ids(table, delimiter, errors)
    return languages


def _parse_languages_with_ids(table, delimiter, errors):
    frame = _read_table(table, delimiter, config.LANGUAGE_COLUMNS, 'languages')
    records: List[LanguageRecord] = []
    table_ids: Dict[str, str] = {}
    seen: Dict[str, int] = {}

    for i, row in enumerate(frame.to_dict('records')):
        line = i + 2
        try:
            glottocode = row['Glottocode'].strip()
            if not _GLOTTOCODE.match(glottocode):
                raise CorpusRowError(line, f"malformed glottocode '{glottocode}'")
            macroarea = row['Macroarea'].strip()
            if macroarea not in config.MACROAREAS:
                raise CorpusRowError(line, f"unknown macro-area '{macroarea}'")
            path = tuple(p.strip() for p in row['Family_Path'].split(config.FAMILY_PATH_SEPARATOR) if p.strip())
            if not path:
                raise CorpusRowError(line, "empty Family_Path")
            latitude = _parse_coordinate(row['Latitude'], 'Latitude', 90.0, line)
            longitude = _parse_coordinate(row['Longitude'], 'Longitude', 180.0, line)
            if (latitude is None) != (longitude is None):
                raise CorpusRowError(line, "only one of Latitude/Longitude given")
        except CorpusRowError as e:
            _handle(e, errors)
            continue

        if glottocode in seen:
            raise CorpusError(f"Duplicate language id '{glottocode}' on lines {seen[glottocode]} and {line}")
        seen[glottocode] = line

        record = LanguageRecord(
            id=glottocode,
            name=row['Name'].strip(),
            family_path=path,
            latitude=latitude,
            longitude=longitude,
            macroarea=macroarea,
        )
        if not record.has_coordinates:
            logger.warning(f"Language {glottocode} has no coordinates; it will be excluded from the areal control")
        records.append(record)
        table_ids[row['ID'].strip()] = glottocode

    return records, table_ids


def parse_concepts(table, delimiter: str = config.CSV_DELIMITER,
                   errors: Optional[List[CorpusRowError]] = None) -> List[ConceptRecord]:
    """Parse the concepts (parameters) table; list-membership columns are optional."""
    frame = _read_table(table, delimiter, config.CONCEPT_COLUMNS, 'concepts')
    records: List[ConceptRecord] = []
    seen: Dict[str, int] = {}

    for i, row in enumerate(frame.to_dict('records')):
        line = i + 2
        concept_id = row['ID'].strip()
        try:
            if not concept_id:
                raise CorpusRowError(line, "empty concept ID")
            flags = {
                attr: _parse_flag(row.get(column, ''), column, line)
                for attr, column in config.CONCEPT_LIST_COLUMNS.items()
            }
        except CorpusRowError as e:
            _handle(e, errors)
            continue
        if concept_id in seen:
            raise CorpusError(f"Duplicate concept id '{concept_id}' on lines {seen[concept_id]} and {line}")
        seen[concept_id] = line
        records.append(ConceptRecord(id=concept_id, gloss=row['Name'].strip(), **flags))

    return records


def parse_forms(table, language_ids: Dict[str, str], concept_ids: Set[str],
                delimiter: str = config.CSV_DELIMITER,
                errors: Optional[List[CorpusRowError]] = None) -> List[FormRecord]:
    """Parse the forms table.

    Args:
        table: Path or file-like object
        language_ids: Map from the languages table's ID column to glottocode
        concept_ids: Known concept ids
        delimiter: Field delimiter
        errors: Row-error sink (see parse_languages)

    Returns:
        FormRecords with whitespace-split segments
    """
    frame = _read_table(table, delimiter, config.FORM_COLUMNS, 'forms')
    records: List[FormRecord] = []

    for i, row in enumerate(frame.to_dict('records')):
        line = i + 2
        try:
            language = language_ids.get(row['Language_ID'].strip())
            if language is None:
                raise CorpusRowError(line, f"unknown Language_ID '{row['Language_ID']}'")
            concept = row['Parameter_ID'].strip()
            if concept not in concept_ids:
                raise CorpusRowError(line, f"unknown Parameter_ID '{concept}'")
            segments = tuple(row['Segments'].split())
            if not segments:
                raise CorpusRowError(line, "empty Segments")
        except CorpusRowError as e:
            _handle(e, errors)
            continue
        records.append(FormRecord(language_id=language, concept_id=concept, segments=segments))

    return records


def load_corpus(languages, concepts, forms, delimiter: str = config.CSV_DELIMITER,
                strict: bool = False) -> Corpus:
    """Load the three tables into a Corpus.

    Args:
        languages: Languages table (path or file-like)
        concepts: Concepts table
        forms: Forms table
        delimiter: Field delimiter shared by all tables
        strict: Raise on the first row-level error instead of skipping the row

    Returns:
        Validated Corpus
    """
    errors: Optional[List[CorpusRowError]] = None if strict else []
    language_records, table_ids = _parse_languages_with_ids(languages, delimiter, errors)
    concept_records = parse_concepts(concepts, delimiter, errors)
    form_records = parse_forms(forms, table_ids, {c.id for c in concept_records}, delimiter, errors)

    if errors:
        logger.warning(f"{len(errors)} row(s) skipped during ingestion")

    corpus = Corpus(tuple(language_records), tuple(concept_records), tuple(form_records))
    logger.info(
        f"Loaded corpus: {len(corpus.languages)} languages, "
        f"{len(corpus.concepts)} concepts, {len(corpus.forms)} forms"
    )
    return corpus


def read_id_list(path) -> Set[str]:
    """Read an id list: one id per line, blank lines and '#' comments ignored."""
    ids = set()
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.split('#', 1)[0].strip()
            if line:
                ids.add(line)
    return ids


# ===== Serialization =====

def write_tables(corpus: Corpus, directory, delimiter: str = config.CSV_DELIMITER) -> Dict[str, Path]:
    """Write the corpus back out as languages.csv, concepts.csv and forms.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    languages = pd.DataFrame([
        {
            'ID': lang.id,
            'Name': lang.name,
            'Glottocode': lang.id,
            'Latitude': '' if lang.latitude is None else repr(lang.latitude),
            'Longitude': '' if lang.longitude is None else repr(lang.longitude),
            'Macroarea': lang.macroarea,
            'Family_Path': config.FAMILY_PATH_SEPARATOR.join(lang.family_path),
        }
        for lang in corpus.languages
    ], columns=config.LANGUAGE_COLUMNS)
    concepts = pd.DataFrame([
        {
            'ID': c.id,
            'Name': c.gloss,
            **{column: int(getattr(c, attr)) for attr, column in config.CONCEPT_LIST_COLUMNS.items()},
        }
        for c in corpus.concepts
    ], columns=config.CONCEPT_COLUMNS + list(config.CONCEPT_LIST_COLUMNS.values()))
    forms = pd.DataFrame([
        {
            'ID': f'{i + 1}',
            'Language_ID': form.language_id,
            'Parameter_ID': form.concept_id,
            'Segments': ' '.join(form.segments),
        }
        for i, form in enumerate(corpus.forms)
    ], columns=['ID'] + config.FORM_COLUMNS)

    paths = {
        'languages': directory / 'languages.csv',
        'concepts': directory / 'concepts.csv',
        'forms': directory / 'forms.csv',
    }
    languages.to_csv(paths['languages'], sep=delimiter, index=False, lineterminator='\n')
    concepts.to_csv(paths['concepts'], sep=delimiter, index=False, lineterminator='\n')
    forms.to_csv(paths['forms'], sep=delimiter, index=False, lineterminator='\n')
    return paths


def save_corpus(corpus: Corpus, path) -> Path:
    """Write a versioned gzip-compressed JSON archive of the corpus."""
    path = Path(path)
    payload = {
        'format': 'soundsym-corpus',
        'format_version': config.CORPUS_FORMAT_VERSION,
        'languages': [asdict(lang) for lang in corpus.languages],
        'concepts': [asdict(c) for c in corpus.concepts],
        'forms': [[f.language_id, f.concept_id, list(f.segments)] for f in corpus.forms],
    }
    # mtime=0 keeps archives byte-identical across runs
    with open(path, 'wb') as raw, gzip.GzipFile(fileobj=raw, mode='wb', mtime=0) as f:
        f.write(json.dumps(payload, ensure_ascii=False, sort_keys=True).encode('utf-8'))
    logger.info(f"Saved corpus archive to {path}")
    return path


def load_corpus_archive(path) -> Corpus:
    with gzip.open(path, 'rb') as f:
        payload = json.loads(f.read().decode('utf-8'))
    if payload.get('format') != 'soundsym-corpus':
        raise CorpusError(f"{path} is not a corpus archive")
    version = payload.get('format_version')
    if version != config.CORPUS_FORMAT_VERSION:
        raise CorpusError(f"Unsupported corpus archive version {version} (expected {config.CORPUS_FORMAT_VERSION})")

    languages = tuple(
        LanguageRecord(**{**lang, 'family_path': tuple(lang['family_path'])})
        for lang in payload['languages']
    )
    concepts = tuple(ConceptRecord(**c) for c in payload['concepts'])
    forms = tuple(FormRecord(lang, concept, tuple(segments)) for lang, concept, segments in payload['forms'])
    return Corpus(languages, concepts, forms)


# ===== Filtering and statistics =====

def filter_corpus(corpus: Corpus, keep_concepts: Optional[Iterable[str]] = None,
                  exclude_languages: Optional[Iterable[str]] = None) -> Corpus:
    """Keep forms of the given concepts and drop excluded languages.

    Languages and concepts left without forms are dropped from the index.

    Raises:
        CorpusError: if nothing remains
    """
    keep = set(keep_concepts) if keep_concepts is not None else set(corpus.concept_index)
    exclude = set(exclude_languages or ())

    forms = tuple(f for f in corpus.forms if f.concept_id in keep and f.language_id not in exclude)
    used_languages = {f.language_id for f in forms}
    used_concepts = {f.concept_id for f in forms}

    if not forms:
        raise CorpusError(
            f"Filter left no forms: {len(corpus.forms)} forms, {len(corpus.languages)} languages, "
            f"{len(corpus.concepts)} concepts before filtering; kept {len(keep & set(corpus.concept_index))} "
            f"concepts, excluded {len(exclude & set(corpus.language_index))} languages"
        )

    filtered = Corpus(
        tuple(lang for lang in corpus.languages if lang.id in used_languages),
        tuple(c for c in corpus.concepts if c.id in used_concepts),
        forms,
    )
    logger.info(
        f"Filtered corpus: {len(filtered.languages)}/{len(corpus.languages)} languages, "
        f"{len(filtered.concepts)}/{len(corpus.concepts)} concepts, {len(filtered.forms)}/{len(corpus.forms)} forms"
    )
    return filtered


def corpus_stats(corpus: Corpus, classify=None) -> CorpusStats:
    """Count languages, forms and phones; vowel_share is over classified phones only."""
    if classify is None:
        from soundsym.phonology import classify_segment
        classify = classify_segment

    n_phones = 0
    vowels = 0
    classified = 0
    for form in corpus.forms:
        n_phones += len(form.segments)
        for token in form.segments:
            sound_class = classify(token).sound_class
            if sound_class == 'vowel':
                vowels += 1
                classified += 1
            elif sound_class == 'consonant':
                classified += 1

    return CorpusStats(
        n_languages=len(corpus.languages),
        n_forms=len(corpus.forms),
        n_phones=n_phones,
        vowel_share=vowels / classified if classified else None,
    )


def segment_frequency_table(corpus: Corpus, sound_class: str, top: int = 5) -> pd.DataFrame:
    """Most frequent segments of one sound class with their feature levels.

    Args:
        corpus: Loaded corpus
        sound_class: 'vowel' or 'consonant'
        top: Number of segments to list

    Returns:
        DataFrame with token, count and one column per category of that class
    """
    from soundsym.phonology import CATEGORIES, classify_segment

    counts = Counter()
    for form in corpus.forms:
        for token in form.segments:
            profile = classify_segment(token)
            if profile.sound_class == sound_class:
                counts[profile.base] += 1

    categories = [name for name, (cls, _) in CATEGORIES.items() if cls == sound_class]
    rows = []
    for token, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]:
        profile = classify_segment(token)
        row = {'token': token, 'count': count}
        row.update({name: profile.level(name) for name in categories})
        rows.append(row)
    return pd.DataFrame(rows, columns=['token', 'count'] + categories)
