"""Declarative model specifications (dependent variable, regressors, dummies)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .timeseries import Cadence


class ModelId(str, enum.Enum):
    M1A = "1a"
    M1B = "1b"
    M1C = "1c"
    M1D = "1d"
    M2A = "2a"
    M2B = "2b"
    M2C = "2c"
    CUSTOM = "custom"


# panel column names
DOCUMENTS = "documents"
TRENDS = "trends"
CASES = "cases"
CASES_NB = "cases_neighbours"
DEATHS = "deaths"
DEATHS_NB = "deaths_neighbours"
VACCINATION = "vaccination_change"
STRINGENCY = "stringency"

COLUMN_LABELS = {
    DOCUMENTS: "New documents",
    TRENDS: "Google Trends",
    CASES: "New cases",
    CASES_NB: "New cases (neighbours)",
    DEATHS: "New deaths",
    DEATHS_NB: "New deaths (neighbours)",
    VACCINATION: "Vaccinated population % change",
    STRINGENCY: "Stringency Index",
}


@dataclass(frozen=True)
class ModelSpec:
    id: ModelId
    dependent: str
    regressors: tuple[str, ...]
    include_weekday_dummies: bool = True
    include_season_dummies: bool = True
    cadence: Cadence = Cadence.DAILY

    def __post_init__(self):
        object.__setattr__(self, "id", ModelId(self.id))
        object.__setattr__(self, "cadence", Cadence(self.cadence))
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if self.cadence is Cadence.WEEKLY and self.include_weekday_dummies:
            raise ValueError("weekly models cannot carry weekday dummies")
        if len(set(self.regressors)) != len(self.regressors):
            raise ValueError("duplicate regressor names")

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.dependent, *self.regressors)

    def with_dependent(self, dependent: str) -> "ModelSpec":
        """Same regressors against another dependent; the cadence follows the dependent."""
        weekly = dependent == TRENDS
        return ModelSpec(
            ModelId.CUSTOM,
            dependent,
            self.regressors,
            include_weekday_dummies=not weekly and self.include_weekday_dummies,
            include_season_dummies=self.include_season_dummies,
            cadence=Cadence.WEEKLY if weekly else Cadence.DAILY,
        )


def _daily(mid, regs):
    return ModelSpec(mid, DOCUMENTS, regs)


def _weekly(mid, regs):
    return ModelSpec(mid, TRENDS, regs, include_weekday_dummies=False, cadence=Cadence.WEEKLY)


MODELS: dict[ModelId, ModelSpec] = {
    ModelId.M1A: _daily(ModelId.M1A, (CASES, CASES_NB)),
    ModelId.M1B: _daily(ModelId.M1B, (DEATHS, DEATHS_NB)),
    ModelId.M1C: _daily(ModelId.M1C, (CASES, CASES_NB, DEATHS, DEATHS_NB)),
    ModelId.M1D: _daily(ModelId.M1D, (DEATHS, DEATHS_NB, VACCINATION, STRINGENCY)),
    ModelId.M2A: _weekly(ModelId.M2A, (CASES, CASES_NB)),
    ModelId.M2B: _weekly(ModelId.M2B, (DEATHS, DEATHS_NB)),
    ModelId.M2C: _weekly(ModelId.M2C, (CASES, CASES_NB, DEATHS, DEATHS_NB)),
}


def get_model(model_id: str | ModelId) -> ModelSpec:
    if isinstance(model_id, ModelId):
        return MODELS[model_id]
    return MODELS[ModelId(model_id.lower().removeprefix("m"))]
