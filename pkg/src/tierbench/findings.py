"""Validation findings shared by the catalog, measurement and pareto checks."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Tuple

RecordId = Tuple[str, int]


class Severity(Enum):
    WARN = "warn"
    FAIL = "fail"


@dataclass(frozen=True)
class Finding:
    """One rule violation attached to a record."""

    record_id: RecordId
    rule: str
    severity: Severity
    message: str

    @property
    def sort_key(self) -> Tuple[str, int, str]:
        return (self.record_id[0], self.record_id[1], self.rule)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.record_id[0],
            "row": self.record_id[1],
            "rule": self.rule,
            "severity": self.severity.value,
            "message": self.message,
        }

    def to_line(self) -> str:
        return f"{self.record_id[0]}:{self.record_id[1]} {self.severity.value} {self.rule}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    """Record count plus findings ordered by record id, then rule name."""

    record_count: int = 0
    findings: Tuple[Finding, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "findings", tuple(sorted(self.findings, key=lambda f: f.sort_key)))

    @property
    def has_failures(self) -> bool:
        return any(f.severity is Severity.FAIL for f in self.findings)

    @property
    def warn_count(self) -> int:
        return sum(1 for f in self.findings if f.severity is Severity.WARN)

    @property
    def fail_count(self) -> int:
        return sum(1 for f in self.findings if f.severity is Severity.FAIL)

    def by_rule(self, rule: str) -> List[Finding]:
        return [f for f in self.findings if f.rule == rule]

    def merge(self, *others: "ValidationReport") -> "ValidationReport":
        """Combine reports covering disjoint record sets."""
        findings = list(self.findings)
        count = self.record_count
        for other in others:
            findings.extend(other.findings)
            count += other.record_count
        return ValidationReport(record_count=count, findings=tuple(findings))

    def with_findings(self, findings: Iterable[Finding]) -> "ValidationReport":
        return ValidationReport(record_count=self.record_count, findings=self.findings + tuple(findings))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "record_count": self.record_count,
            "warn_count": self.warn_count,
            "fail_count": self.fail_count,
            "findings": [f.to_dict() for f in self.findings],
        }

    def to_text(self) -> str:
        lines = [f"records: {self.record_count}", f"warn: {self.warn_count}", f"fail: {self.fail_count}"]
        lines.extend(f.to_line() for f in self.findings)
        return "\n".join(lines) + "\n"
