"""ISO-639-3 language table and alias canonicalization.

Web-crawled sources mix 2- and 3-letter codes; every code entering the
pipeline is canonicalized to ISO-639-3 through a versioned alias table
shipped with the package. Canonicalization is idempotent: alias targets are
themselves canonical codes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class LanguageTable:
    """Known canonical codes plus an alias -> canonical mapping."""

    codes: frozenset[str]
    aliases: dict[str, str] = field(default_factory=dict)

    def canonicalize(self, code: str) -> str:
        """Map a possibly-aliased code to its ISO-639-3 form.

        Unknown codes pass through lowercased; membership is checked
        separately via `is_known`.
        """
        code = code.strip().lower()
        return self.aliases.get(code, code)

    def is_known(self, code: str) -> bool:
        return self.canonicalize(code) in self.codes


def _read_tsv(text: str) -> list[tuple[str, str]]:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        left, _, right = line.partition("\t")
        rows.append((left.strip(), right.strip()))
    return rows


def load_alias_table(path: Path) -> dict[str, str]:
    """Read an `alias<TAB>iso639_3` file."""
    return dict(_read_tsv(path.read_text(encoding="utf-8")))


@lru_cache(maxsize=1)
def default_table() -> LanguageTable:
    """The table shipped with the package."""
    data = resources.files("cleanspeech.data")
    codes = frozenset(
        code for code, _ in _read_tsv(data.joinpath("languages.tsv").read_text(encoding="utf-8"))
    )
    aliases = dict(_read_tsv(data.joinpath("lang_aliases.tsv").read_text(encoding="utf-8")))
    return LanguageTable(codes=codes, aliases=aliases)
