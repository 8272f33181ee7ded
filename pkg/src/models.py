import enum
import math
from dataclasses import dataclass

from .errors import ConfigError


class ModelId(enum.Enum):
    SWIFT_HOHENBERG = "m1"
    BRUSSELATOR = "m2"
    COUPLED_KS = "m3"
    KOLMOGOROV = "m4"

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower()
        for member in cls:
            if key in (member.value, member.name.lower()):
                return member
        raise ConfigError(f"Unknown model '{text}' (expected one of m1, m2, m3, m4)")


# Model ids written into binary dumps; modulation states are offset by 10.
DUMP_IDS = {
    ModelId.SWIFT_HOHENBERG: 1,
    ModelId.BRUSSELATOR: 2,
    ModelId.COUPLED_KS: 3,
    ModelId.KOLMOGOROV: 4,
}
MODULATION_DUMP_OFFSET = 10

R_STAR = math.sqrt(2.0)


@dataclass(frozen=True)
class ModelSpec:
    """
    One of the four built-in fast-slow models.

    Attributes:
        id (ModelId): Which model.
        a, d1, d2 (float): Brusselator parameters, ignored elsewhere.
        dimension (int): Number of unbounded directions p (1, or 2 for the Brusselator).
    """
    id: ModelId
    a: float = 1.0
    d1: float = 1.0
    d2: float = 0.5
    dimension: int = 1

    def __post_init__(self):
        if self.id is ModelId.BRUSSELATOR:
            if self.a <= 0 or self.d1 <= 0 or self.d2 <= 0:
                raise ConfigError(f"Brusselator needs a, d1, d2 > 0, got ({self.a}, {self.d1}, {self.d2})")
            # no-Turing condition
            if math.sqrt(self.d1 / self.d2) <= (math.sqrt(1.0 + self.a ** 2) - 1.0) / self.a:
                raise ConfigError(
                    f"Brusselator parameters a={self.a}, d1={self.d1}, d2={self.d2} admit a Turing branch"
                )
            if self.dimension not in (1, 2):
                raise ConfigError(f"Brusselator supports dimension 1 or 2, got {self.dimension}")
        elif self.dimension != 1:
            raise ConfigError(f"Model {self.id.value} only supports dimension 1")

    @classmethod
    def create(cls, model, **params):
        model_id = model if isinstance(model, ModelId) else ModelId.parse(model)
        accepted = {k: v for k, v in params.items() if v is not None and k in ("a", "d1", "d2", "dimension")}
        return cls(model_id, **accepted)

    @property
    def n_components(self):
        return 1 if self.id is ModelId.SWIFT_HOHENBERG else 2

    @property
    def beta(self):
        return 4 if self.id is ModelId.KOLMOGOROV else 2

    @property
    def r_star(self):
        return R_STAR if self.id is ModelId.KOLMOGOROV else None

    @property
    def dump_id(self):
        return DUMP_IDS[self.id]

    def describe(self):
        if self.id is ModelId.BRUSSELATOR:
            return f"{self.id.value} (a={self.a:g}, d1={self.d1:g}, d2={self.d2:g}, n={self.dimension})"
        return self.id.value
