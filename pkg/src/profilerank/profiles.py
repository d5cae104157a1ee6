"""Pre-specified expression profiles: basis matrix plus per-coefficient tests.

A profile writes the vector of true condition means as a linear combination
of basis columns. Each coefficient carries one of three constraints:

* ``free``      -- no test; the coefficient only absorbs structure,
* ``pos[:d]``   -- must exceed the threshold d (default 0),
* ``equiv:e``   -- must be equivalent to zero within the margin e > 0.

Basis entries live as exact decimal text in the profile file and are parsed
to floats once at load; linear independence is certified by exact rational
elimination on that text, so validation never depends on floating-point
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources

import numpy as np

from .design import LABEL_PATTERN
from .errors import ValidationError

__all__ = [
    "Constraint",
    "ProfileSpec",
    "ValidatedProfile",
    "validate_profile",
    "parse_profile",
    "format_profile",
    "profile_from_file",
    "profile_to_file",
    "bundled_profile",
    "bundled_data_path",
    "BUNDLED_PROFILES",
]

BUNDLED_PROFILES = (
    "pluripotent",
    "sox2",
    "day3_marker_v1",
    "day3_marker_v2",
    "day3_marker_v3",
)


@dataclass(frozen=True)
class Constraint:
    """Test attached to one profile coefficient."""

    kind: str  # "free" | "pos" | "equiv"
    value: float = 0.0  # threshold for "pos", margin for "equiv"

    def __post_init__(self) -> None:
        if self.kind not in ("free", "pos", "equiv"):
            raise ValidationError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "equiv" and not self.value > 0.0:
            raise ValidationError(
                f"equivalence margin must be > 0, got {self.value!r}"
            )
        if self.kind == "pos" and self.value < 0.0:
            raise ValidationError(
                f"positivity threshold must be >= 0, got {self.value!r}"
            )

    @classmethod
    def unconstrained(cls) -> "Constraint":
        return cls("free")

    @classmethod
    def positive_above(cls, threshold: float = 0.0) -> "Constraint":
        return cls("pos", float(threshold))

    @classmethod
    def equivalent_zero(cls, margin: float) -> "Constraint":
        return cls("equiv", float(margin))

    @property
    def is_test_bearing(self) -> bool:
        return self.kind != "free"

    def token(self) -> str:
        if self.kind == "free":
            return "free"
        if self.kind == "pos":
            return "pos" if self.value == 0.0 else f"pos:{self.value!r}"
        return f"equiv:{self.value!r}"


def _parse_constraint(token: str, where: str) -> Constraint:
    name, sep, arg = token.partition(":")
    if name == "free":
        if sep:
            raise ValidationError(f"{where}: 'free' takes no argument")
        return Constraint.unconstrained()
    if name == "pos":
        if not sep:
            return Constraint.positive_above(0.0)
        try:
            return Constraint.positive_above(float(arg))
        except ValueError as exc:
            raise ValidationError(f"{where}: bad pos threshold {arg!r}") from exc
    if name == "equiv":
        if not sep:
            raise ValidationError(f"{where}: 'equiv' needs a margin, e.g. equiv:1")
        try:
            return Constraint.equivalent_zero(float(arg))
        except ValueError as exc:
            raise ValidationError(f"{where}: bad equiv margin {arg!r}") from exc
    raise ValidationError(f"{where}: unknown constraint {token!r}")


def _exact_rank(columns: list[list[Fraction]]) -> int:
    # Gaussian elimination over the rationals; exact, no tolerance.
    if not columns:
        return 0
    rows = len(columns[0])
    mat = [[col[i] for col in columns] for i in range(rows)]
    rank = 0
    for j in range(len(columns)):
        pivot = next((i for i in range(rank, rows) if mat[i][j] != 0), None)
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        inv = 1 / mat[rank][j]
        mat[rank] = [v * inv for v in mat[rank]]
        for i in range(rows):
            if i != rank and mat[i][j] != 0:
                factor = mat[i][j]
                mat[i] = [a - factor * b for a, b in zip(mat[i], mat[rank])]
        rank += 1
    return rank


@dataclass(frozen=True)
class ProfileSpec:
    """A named basis over conditions with one constraint per coefficient.

    ``basis_text`` keeps the exact decimal entries for auditability and file
    round-trips; ``basis`` is the parsed float matrix actually used in
    computation (conditions x coefficients).
    """

    name: str
    condition_labels: tuple[str, ...]
    coefficient_names: tuple[str, ...]
    basis_text: tuple[tuple[str, ...], ...]  # one inner tuple per coefficient
    constraints: tuple[Constraint, ...]
    basis: np.ndarray = field(compare=False, repr=False, default=None)

    def __post_init__(self) -> None:
        if not LABEL_PATTERN.match(self.name):
            raise ValidationError(f"invalid profile name {self.name!r}")
        for label in self.condition_labels:
            if not LABEL_PATTERN.match(label):
                raise ValidationError(f"invalid condition label {label!r}")
        for cname in self.coefficient_names:
            if not LABEL_PATTERN.match(cname):
                raise ValidationError(f"invalid coefficient name {cname!r}")
        if len(set(self.coefficient_names)) != len(self.coefficient_names):
            raise ValidationError("coefficient names must be unique")
        n_cond = len(self.condition_labels)
        n_coef = len(self.coefficient_names)
        if len(self.basis_text) != n_coef:
            raise ValidationError(
                f"{n_coef} coefficients but {len(self.basis_text)} basis columns"
            )
        if len(self.constraints) != n_coef:
            raise ValidationError(
                f"{n_coef} coefficients but {len(self.constraints)} constraints"
            )
        parsed = []
        for cname, column in zip(self.coefficient_names, self.basis_text):
            if len(column) != n_cond:
                raise ValidationError(
                    f"coefficient {cname!r}: {len(column)} entries for "
                    f"{n_cond} conditions"
                )
            try:
                parsed.append([float(v) for v in column])
            except ValueError as exc:
                raise ValidationError(
                    f"coefficient {cname!r}: non-numeric basis entry"
                ) from exc
        basis = np.array(parsed, dtype=float).T.reshape(n_cond, n_coef)
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def from_columns(cls, name, condition_labels, columns, constraints):
        """Build a spec from (coefficient_name, entries) pairs.

        Entries may be decimal strings (kept verbatim) or numbers
        (stored via repr, which round-trips exactly).
        """
        coef_names = tuple(cname for cname, _ in columns)
        text = tuple(
            tuple(v if isinstance(v, str) else repr(float(v)) for v in entries)
            for _, entries in columns
        )
        return cls(
            name=name,
            condition_labels=tuple(condition_labels),
            coefficient_names=coef_names,
            basis_text=text,
            constraints=tuple(constraints),
        )


@dataclass(frozen=True)
class ValidatedProfile:
    """A ProfileSpec whose basis columns are certified linearly independent."""

    spec: ProfileSpec
    test_bearing: tuple[int, ...]  # coefficient indices that carry a test

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def condition_labels(self) -> tuple[str, ...]:
        return self.spec.condition_labels

    @property
    def coefficient_names(self) -> tuple[str, ...]:
        return self.spec.coefficient_names

    @property
    def constraints(self) -> tuple[Constraint, ...]:
        return self.spec.constraints

    @property
    def basis(self) -> np.ndarray:
        return self.spec.basis

    def with_margins(self, epsilon=None, deltas=None) -> "ValidatedProfile":
        """Return a copy with overridden test margins.

        ``epsilon`` replaces the margin of every equivalence constraint;
        ``deltas`` maps coefficient names to new positivity thresholds.
        """
        deltas = dict(deltas or {})
        unknown = set(deltas) - set(self.coefficient_names)
        if unknown:
            raise ValidationError(
                f"delta override for unknown coefficient(s): {sorted(unknown)}"
            )
        new = []
        for cname, con in zip(self.coefficient_names, self.constraints):
            if con.kind == "equiv" and epsilon is not None:
                con = Constraint.equivalent_zero(epsilon)
            if cname in deltas:
                if con.kind != "pos":
                    raise ValidationError(
                        f"coefficient {cname!r} has no positivity threshold "
                        "to override"
                    )
                con = Constraint.positive_above(deltas[cname])
            new.append(con)
        spec = replace(self.spec, constraints=tuple(new), basis=None)
        return ValidatedProfile(spec=spec, test_bearing=self.test_bearing)


def validate_profile(spec: ProfileSpec) -> ValidatedProfile:
    """Certify linear independence of the basis and locate the test-bearing
    coefficients.

    Rank is computed exactly over rationals parsed from the decimal text,
    so acceptance matches brute-force elimination by construction.
    """
    columns = []
    for cname, col in zip(spec.coefficient_names, spec.basis_text):
        try:
            columns.append([Fraction(v) for v in col])
        except ValueError as exc:
            raise ValidationError(
                f"coefficient {cname!r}: entry not an exact decimal"
            ) from exc
    if _exact_rank(columns) < len(columns):
        raise ValidationError(
            f"profile {spec.name!r}: basis columns are linearly dependent"
        )
    test_bearing = tuple(
        j for j, con in enumerate(spec.constraints) if con.is_test_bearing
    )
    if not test_bearing:
        raise ValidationError(
            f"profile {spec.name!r}: every coefficient is unconstrained, "
            "so there is nothing to rank by"
        )
    return ValidatedProfile(spec=spec, test_bearing=test_bearing)


def parse_profile(text: str, source: str = "<string>") -> ProfileSpec:
    """Parse the plain-text profile format.

    Line 1: ``name <string>``; line 2: ``conditions <a,b,...>``; then one
    ``coef <name> <decimals> <constraint>`` line per basis column. Blank
    lines and ``#`` comments are skipped.
    """
    name = None
    conditions: tuple[str, ...] | None = None
    columns: list[tuple[str, tuple[str, ...]]] = []
    constraints: list[Constraint] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        fields = line.split()
        keyword = fields[0]
        if keyword == "name":
            if len(fields) != 2:
                raise ValidationError(f"{where}: expected 'name <string>'")
            if name is not None:
                raise ValidationError(f"{where}: duplicate 'name' line")
            name = fields[1]
        elif keyword == "conditions":
            if len(fields) != 2:
                raise ValidationError(
                    f"{where}: expected 'conditions <comma-separated labels>'"
                )
            if conditions is not None:
                raise ValidationError(f"{where}: duplicate 'conditions' line")
            conditions = tuple(fields[1].split(","))
        elif keyword == "coef":
            if len(fields) != 4:
                raise ValidationError(
                    f"{where}: expected 'coef <name> <decimals> <constraint>'"
                )
            if conditions is None:
                raise ValidationError(
                    f"{where}: 'coef' lines must follow the 'conditions' line"
                )
            entries = tuple(fields[2].split(","))
            if len(entries) != len(conditions):
                raise ValidationError(
                    f"{where}: {len(entries)} basis entries for "
                    f"{len(conditions)} conditions"
                )
            for v in entries:
                try:
                    float(v)
                except ValueError as exc:
                    raise ValidationError(
                        f"{where}: non-numeric basis entry {v!r}"
                    ) from exc
            columns.append((fields[1], entries))
            constraints.append(_parse_constraint(fields[3], where))
        else:
            raise ValidationError(f"{where}: unknown keyword {keyword!r}")
    if name is None:
        raise ValidationError(f"{source}: missing 'name' line")
    if conditions is None:
        raise ValidationError(f"{source}: missing 'conditions' line")
    if not columns:
        raise ValidationError(f"{source}: no 'coef' lines")
    return ProfileSpec(
        name=name,
        condition_labels=conditions,
        coefficient_names=tuple(cname for cname, _ in columns),
        basis_text=tuple(entries for _, entries in columns),
        constraints=tuple(constraints),
    )


def format_profile(spec: ProfileSpec) -> str:
    """Render a spec in the profile file format; parse(format(p)) == p."""
    lines = [f"name {spec.name}", f"conditions {','.join(spec.condition_labels)}"]
    for cname, col, con in zip(
        spec.coefficient_names, spec.basis_text, spec.constraints
    ):
        lines.append(f"coef {cname} {','.join(col)} {con.token()}")
    return "\n".join(lines) + "\n"


def profile_from_file(path) -> ProfileSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read profile file {path}: {exc}") from exc
    return parse_profile(text, source=str(path))


def profile_to_file(spec: ProfileSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_profile(spec))


def bundled_data_path(filename: str):
    """Path to a data file shipped with the package."""
    return resources.files("profilerank.data").joinpath(filename)


def bundled_profile(name: str) -> ProfileSpec:
    """Load one of the profiles shipped with the package."""
    if name not in BUNDLED_PROFILES:
        raise ValidationError(
            f"unknown bundled profile {name!r}; available: {BUNDLED_PROFILES}"
        )
    text = bundled_data_path(f"{name}.profile").read_text(encoding="utf-8")
    return parse_profile(text, source=f"<bundled:{name}>")
