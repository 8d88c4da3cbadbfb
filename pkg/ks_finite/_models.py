from typing import List, Literal, Optional, Tuple, Union

import pydantic

import ks_finite._util as util

Vector3 = pydantic.conlist(float, min_items=3, max_items=3)
IndexTriple = pydantic.conlist(pydantic.NonNegativeInt, min_items=3, max_items=3)
Probability = pydantic.confloat(ge=0, le=1)
Alpha = pydantic.confloat(gt=0, lt=1)
Seed = pydantic.conint(ge=0, lt=2**64)
# complex numbers are written as a number or a [real, imag] pair
ComplexEntry = Union[float, Tuple[float, float]]
NoClickPolicy = Literal["CountAsFailure", "Discard"]
HexDigest = pydantic.constr(regex=r"^[0-9a-f]{64}$")


class _Doc(pydantic.BaseModel):
    class Config:
        extra = pydantic.Extra.forbid
        allow_mutation = False


class KSSetDoc(_Doc):
    name: str
    tolerance: pydantic.NonNegativeFloat = 1e-9
    directions: List[Vector3]
    triads: Optional[List[IndexTriple]] = None


class NoiseModelDoc(_Doc):
    jitter_sigma: float = 0.0
    detection_efficiency: Probability = 1.0
    no_click_policy: NoClickPolicy = "CountAsFailure"
    depolarizing_p: Probability = 0.0

    @pydantic.validator("jitter_sigma", pre=True)
    def _parse_jitter(cls, value):  # noqa: N805
        try:
            return util.parse_angle(value)
        except RuntimeError as e:
            raise ValueError(str(e)) from e


class StateDoc(_Doc):
    kind: Literal["maximally-mixed", "pure", "random-per-trial"] = "maximally-mixed"
    vector: Optional[pydantic.conlist(ComplexEntry, min_items=3, max_items=3)] = None

    @pydantic.root_validator(skip_on_failure=True)
    def _check_vector(cls, values):  # noqa: N805
        if (values["kind"] == "pure") != (values["vector"] is not None):
            raise ValueError("a vector is required for, and only for, pure states")
        return values


class HVPointDoc(_Doc):
    weight: pydantic.NonNegativeFloat
    values: List[pydantic.conint(ge=0, le=1)]


class HVModelDoc(_Doc):
    """Explicit points, or a random model with `random_points` points"""

    points: Optional[List[HVPointDoc]] = None
    random_points: Optional[pydantic.PositiveInt] = None

    @pydantic.root_validator(skip_on_failure=True)
    def _check_exclusive(cls, values):  # noqa: N805
        if (values["points"] is None) == (values["random_points"] is None):
            raise ValueError("set exactly one of 'points' and 'random_points'")
        return values


class ContextualModelDoc(_Doc):
    # None means uniform over the three positions
    zero_position: Optional[List[Tuple[Probability, Probability, Probability]]] = None


class SourceDoc(_Doc):
    kind: Literal["quantum", "hidden-variable", "contextual"] = "quantum"
    model: Literal["sequential", "joint"] = "sequential"
    hv_model: Optional[HVModelDoc] = None
    contextual_model: Optional[ContextualModelDoc] = None

    @pydantic.root_validator(skip_on_failure=True)
    def _check_model(cls, values):  # noqa: N805
        if values["kind"] == "hidden-variable" and values["hv_model"] is None:
            raise ValueError("hidden-variable source needs 'hv_model'")
        return values


class ExperimentConfigDoc(_Doc):
    # a KS set document, a path to one or "builtin:peres[-completed]"
    ks_set: Union[KSSetDoc, str] = pydantic.Field(alias="set")
    state: StateDoc = StateDoc()
    noise: NoiseModelDoc = NoiseModelDoc()
    source: SourceDoc = SourceDoc()
    trials_per_triad: pydantic.PositiveInt
    seed: Seed
    alpha: Alpha = 0.01
    verdict: bool = True
    chunk_size: pydantic.PositiveInt = 4096

    class Config:
        allow_population_by_field_name = True


class LHVPointDoc(_Doc):
    weight: pydantic.NonNegativeFloat
    # v(particle, setting) in the order 1X, 1Y, 2X, 2Y, 3X, 3Y
    values: pydantic.conlist(Literal[1, -1], min_items=6, max_items=6)


class GhzConfigDoc(_Doc):
    trials_per_context: pydantic.PositiveInt
    seed: Seed
    alpha: Alpha = 0.01
    source: Literal["quantum", "lhv"] = "quantum"
    visibility: Probability = 1.0
    detection_efficiency: Probability = 1.0
    no_click_policy: NoClickPolicy = "CountAsFailure"
    lhv_model: Optional[List[LHVPointDoc]] = None
    chunk_size: pydantic.PositiveInt = 4096

    @pydantic.root_validator(skip_on_failure=True)
    def _check_lhv(cls, values):  # noqa: N805
        if values["source"] == "lhv" and not values["lhv_model"]:
            raise ValueError("lhv source needs 'lhv_model'")
        return values


class TriadStatsDoc(_Doc):
    triad: pydantic.NonNegativeInt
    members: Optional[List[pydantic.NonNegativeInt]] = None
    settings: Optional[str] = None
    target_parity: Optional[Literal[1, -1]] = None
    counts: pydantic.conlist(pydantic.NonNegativeInt, min_items=4, max_items=4)
    no_click: pydantic.NonNegativeInt
    trials: pydantic.NonNegativeInt
    failures: pydantic.NonNegativeInt
    epsilon_hat: Probability
    upper_bound: Probability


class ExperimentReportDoc(_Doc):
    mode: Literal["ks", "ghz"]
    set_name: str
    N: pydantic.PositiveInt  # noqa: N815
    alpha: Alpha
    alpha_per_triad: Alpha
    no_click_policy: NoClickPolicy
    trials_per_triad: Optional[pydantic.PositiveInt]
    seed: Optional[Seed]
    config_digest: Optional[HexDigest]
    triads: List[TriadStatsDoc]
    epsilon_max: Probability
    u_max: Probability
    threshold: Probability
    verdict: Optional[Literal["Excluded", "Inconclusive"]]


class RunManifestDoc(_Doc):
    subcommand: str
    inputs: List[str]
    config: Optional[dict]
    version: str
    started: str
    finished: str
