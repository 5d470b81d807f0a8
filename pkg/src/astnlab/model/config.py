from __future__ import annotations

from dataclasses import asdict, dataclass, fields

VARIANTS = ("second_order", "first_order", "abs_first_order", "concatenated")
LEVELS = ("multi_level", "dynamic_only")


@dataclass
class AstnConfig:
    """Architecture hyper-parameters; JSON round-trips through ``to_json``/``from_json``."""

    width: int = 32
    height: int = 16
    sample_rate: int = 12
    spatial_channels: tuple[int, ...] = (8, 16, 24, 24, 16)
    spatial_kernel: int = 3
    spatial_pool_after: tuple[int, ...] = (0, 1)
    spatial_dim: int = 64
    intrinsic_channels: tuple[int, ...] = (32, 32)
    intrinsic_kernel: int = 3
    intrinsic_pool_after: tuple[int, ...] = (0, 1)
    intrinsic_dim: int = 64
    hidden_dim: int = 64
    bidirectional: bool = False
    classifier_hidden: tuple[int, ...] = (64,)
    leaky_slope: float = 0.01
    discriminator_variant: str = "second_order"
    discriminator_levels: str = "multi_level"
    # discriminator target for same-subject pairs; 1 flips the output coding
    same_subject_target: int = 0

    def __post_init__(self):
        for name in ("spatial_channels", "spatial_pool_after", "intrinsic_channels",
                     "intrinsic_pool_after", "classifier_hidden"):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))

    @property
    def dynamic_dim(self) -> int:
        return self.hidden_dim * (2 if self.bidirectional else 1)

    def spatial_grid(self) -> tuple[int, int]:
        """Feature-map size after the conv stack."""
        w, h = self.width, self.height
        for i in range(len(self.spatial_channels)):
            if i in self.spatial_pool_after:
                w, h = w // 2, h // 2
        return w, h

    def intrinsic_length(self) -> int:
        length = self.sample_rate
        for i in range(len(self.intrinsic_channels)):
            if i in self.intrinsic_pool_after:
                length //= 2
        return length

    def feature_dim(self) -> int:
        """Width of the discriminator input for the configured variant and levels."""
        per_level = [self.dynamic_dim]
        if self.discriminator_levels == "multi_level":
            per_level = [self.sample_rate * self.spatial_dim, self.intrinsic_dim, self.dynamic_dim]
        total = sum(per_level)
        return 2 * total if self.discriminator_variant == "concatenated" else total

    def validate(self) -> None:
        for name in ("width", "height", "sample_rate", "spatial_dim", "intrinsic_dim", "hidden_dim", "spatial_kernel",
                     "intrinsic_kernel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.spatial_channels or not self.intrinsic_channels:
            raise ValueError("conv stacks need at least one layer")
        if any(c <= 0 for c in self.spatial_channels + self.intrinsic_channels + self.classifier_hidden):
            raise ValueError("layer widths must be positive")
        if not 0 < self.leaky_slope < 1:
            raise ValueError("leaky_slope must lie in (0, 1)")
        if self.discriminator_variant not in VARIANTS:
            raise ValueError(f"unknown discriminator variant {self.discriminator_variant!r}; choose from {VARIANTS}")
        if self.discriminator_levels not in LEVELS:
            raise ValueError(f"unknown discriminator levels {self.discriminator_levels!r}; choose from {LEVELS}")
        if self.same_subject_target not in (0, 1):
            raise ValueError("same_subject_target must be 0 or 1")
        w, h = self.spatial_grid()
        if w < 1 or h < 1:
            raise ValueError(f"{self.width}x{self.height} grid is too small for {len(self.spatial_pool_after)} pools")
        if self.intrinsic_length() < 1:
            raise ValueError(
                f"sample rate {self.sample_rate} is shorter than the intrinsic encoder's receptive field"
            )

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_json(cls, d: dict) -> "AstnConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown AstnConfig fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg
