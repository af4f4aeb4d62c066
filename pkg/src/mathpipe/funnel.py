"""Stage-by-stage filtering funnel with conservation guarantees."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class FunnelStage:
    name: str
    count_in: int
    count_out: int

    @property
    def removed(self) -> int:
        return self.count_in - self.count_out


@dataclass
class FunnelReport:
    stages: list[FunnelStage] = field(default_factory=list)
    extras: dict[str, int] = field(default_factory=dict)

    def add_stage(self, name: str, count_in: int, count_out: int) -> None:
        if count_out > count_in:
            raise ValueError(f"stage {name!r}: out {count_out} exceeds in {count_in}")
        if self.stages and self.stages[-1].count_out != count_in:
            raise ValueError(
                f"stage {name!r}: in {count_in} != previous out {self.stages[-1].count_out}"
            )
        self.stages.append(FunnelStage(name, count_in, count_out))

    @property
    def final_count(self) -> int:
        return self.stages[-1].count_out if self.stages else 0

    def to_dict(self) -> dict:
        return {
            "stages": [
                {"name": s.name, "in": s.count_in, "out": s.count_out, "removed": s.removed}
                for s in self.stages
            ],
            "extras": dict(self.extras),
        }
