"""
Program Template Library
The programs the toy policy can write. Each task variant has three
templates: a compact correct program, a stepwise correct program, and a
faulty sibling of the stepwise program that differs from it by one token
and fails with a planted error. LocalEdit repairs map a faulty template to
its stepwise sibling.
"""

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import List, Optional, Sequence, Tuple

from .trajectory import ErrorKind


class Edit(IntEnum):
    BALANCE_PARENS = 0
    RENAME_VARIABLE = 1
    FIX_DIVISOR = 2


class Role(str, Enum):
    COMPACT = "compact"
    STEPWISE = "stepwise"
    FAULTY = "faulty"


@dataclass(frozen=True)
class Variant:
    family: str
    name: str
    compact: str
    stepwise: str
    faulty: str
    defect: Edit
    planted_error: ErrorKind

    @property
    def key(self) -> str:
        return f"{self.family}/{self.name}"


@dataclass(frozen=True)
class Template:
    template_id: int
    variant: str
    role: Role
    pattern: str
    defect: Optional[Edit] = None
    repair_id: Optional[int] = None

    @property
    def name(self) -> str:
        return f"{self.variant}/{self.role.value}"

    def render(self, operands: Sequence[int]) -> str:
        a, b, c = (tuple(operands) + (0, 0, 0))[:3]
        return self.pattern.format(a=a, b=b, c=c)


FAMILIES: Tuple[str, ...] = ("arithmetic", "two_step", "division")

VARIANTS: Tuple[Variant, ...] = (
    Variant("arithmetic", "add", "{a} + {b}", "({a} + {b})", "({a} + {b}",
            Edit.BALANCE_PARENS, ErrorKind.PARSE),
    Variant("arithmetic", "sub", "{a} - {b}", "({a} - {b})", "({a} - {b}",
            Edit.BALANCE_PARENS, ErrorKind.PARSE),
    Variant("arithmetic", "mul", "{a} * {b}", "({a} * {b})", "({a} * {b}",
            Edit.BALANCE_PARENS, ErrorKind.PARSE),
    Variant("two_step", "add_mul", "({a} + {b}) * {c}", "x = {a} + {b}; x * {c}",
            "x = {a} + {b}; y * {c}", Edit.RENAME_VARIABLE, ErrorKind.UNDEFINED_VARIABLE),
    Variant("two_step", "mul_sub", "{a} * {b} - {c}", "x = {a} * {b}; x - {c}",
            "x = {a} * {b}; y - {c}", Edit.RENAME_VARIABLE, ErrorKind.UNDEFINED_VARIABLE),
    Variant("two_step", "sub_add", "{a} - {b} + {c}", "x = {a} - {b}; x + {c}",
            "x = {a} - {b}; y + {c}", Edit.RENAME_VARIABLE, ErrorKind.UNDEFINED_VARIABLE),
    Variant("division", "div", "{a} / ({b} - {c})", "d = {b} - {c}; {a} / d",
            "d = {b} - {b}; {a} / d", Edit.FIX_DIVISOR, ErrorKind.DIVISION_BY_ZERO),
    Variant("division", "mod", "{a} % ({b} - {c})", "d = {b} - {c}; {a} % d",
            "d = {b} - {b}; {a} % d", Edit.FIX_DIVISOR, ErrorKind.DIVISION_BY_ZERO),
)


def _build_templates() -> Tuple[Template, ...]:
    templates: List[Template] = []
    for variant in VARIANTS:
        base = len(templates)
        templates.append(Template(base, variant.key, Role.COMPACT, variant.compact))
        templates.append(Template(base + 1, variant.key, Role.STEPWISE, variant.stepwise))
        templates.append(Template(base + 2, variant.key, Role.FAULTY, variant.faulty,
                                  defect=variant.defect, repair_id=base + 1))
    return tuple(templates)


TEMPLATES: Tuple[Template, ...] = _build_templates()
VARIANT_KEYS: Tuple[str, ...] = tuple(v.key for v in VARIANTS)


def variants_of(family: str) -> List[Variant]:
    return [v for v in VARIANTS if v.family == family]


def templates_for(variant_key: str) -> List[Template]:
    return [t for t in TEMPLATES if t.variant == variant_key]


def correct_templates(variant_key: str) -> List[Template]:
    return [t for t in templates_for(variant_key) if t.role != Role.FAULTY]


def faulty_template(variant_key: str) -> Template:
    return next(t for t in templates_for(variant_key) if t.role == Role.FAULTY)


def identify_template(code: str, operands: Sequence[int]) -> Optional[int]:
    """Id of the first template that renders to exactly this code"""
    for template in TEMPLATES:
        if template.render(operands) == code:
            return template.template_id
    return None


def apply_edit(template_id: Optional[int], edit: Edit) -> Optional[int]:
    """Template reached by a local edit, or None when the edit does not apply"""
    if template_id is None:
        return None
    template = TEMPLATES[template_id]
    if template.defect is edit:
        return template.repair_id
    return None
