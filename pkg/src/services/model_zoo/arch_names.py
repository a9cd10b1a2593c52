"""Architecture naming: `<Cluster>[(qualifier)]_Bk<digits>`.

Clusters: CNN, RNN, Trans, Att. Qualifiers: concat, avg, LSTM. Digits are
the tapped backbone blocks, strictly increasing, each in 1..4.
"""

from typing import Optional, Tuple

from ...domain.errors import ArchitectureNameError, ValidationError
from ...domain.model_types import (
    ArchitectureSpec,
    BackboneSpec,
    Cluster,
    FeatureTapSpec,
    FusionMode,
    FusionModeName,
    HeadKind,
    HeadSpec,
)


CLUSTER_TOKENS = ("CNN", "RNN", "Trans", "Att")
QUALIFIERS = ("concat", "avg", "LSTM")
BLOCK_MARKER = "_Bk"

_FUSION_QUALIFIER = {FusionModeName.CONCAT: "concat", FusionModeName.AVERAGE: "avg"}
_QUALIFIER_FUSION = {"concat": FusionModeName.CONCAT, "avg": FusionModeName.AVERAGE}


def _scan(name: str) -> Tuple[str, Optional[str], Tuple[int, ...]]:
    """Split a name into cluster token, qualifier and blocks, reporting the failing position."""
    cluster = next((token for token in CLUSTER_TOKENS if name.startswith(token)), None)
    if cluster is None:
        raise ArchitectureNameError(name, 0, f"expected one of {', '.join(CLUSTER_TOKENS)}")
    pos = len(cluster)

    qualifier = None
    if name[pos:pos + 1] == "(":
        close = name.find(")", pos + 1)
        if close < 0:
            raise ArchitectureNameError(name, len(name), "unclosed '('")
        qualifier = name[pos + 1:close]
        if qualifier not in QUALIFIERS:
            raise ArchitectureNameError(name, pos + 1, f"expected one of {', '.join(QUALIFIERS)}")
        pos = close + 1

    if not name.startswith(BLOCK_MARKER, pos):
        raise ArchitectureNameError(name, pos, f"expected '{BLOCK_MARKER}'")
    pos += len(BLOCK_MARKER)
    if pos >= len(name):
        raise ArchitectureNameError(name, pos, "expected at least one block digit")

    blocks = []
    for offset, char in enumerate(name[pos:]):
        if char not in "1234":
            raise ArchitectureNameError(name, pos + offset, "expected a block digit 1-4")
        digit = int(char)
        if blocks and digit <= blocks[-1]:
            raise ArchitectureNameError(name, pos + offset, "block digits must be strictly increasing")
        blocks.append(digit)
    return cluster, qualifier, tuple(blocks)


def parse_arch_name(
    name: str,
    channels: int = 17,
    timepoints: int = 100,
    backbone: Optional[BackboneSpec] = None,
) -> ArchitectureSpec:
    """Build the ArchitectureSpec a table name denotes."""
    cluster, qualifier, blocks = _scan(name)
    qualifier_pos = len(cluster) + 1
    many = len(blocks) > 1

    def fail(position: int, reason: str) -> None:
        raise ArchitectureNameError(name, position, reason)

    if qualifier in _QUALIFIER_FUSION and not many:
        fail(qualifier_pos, f"'{qualifier}' fusion needs at least two blocks")
    if qualifier is None and many:
        fail(len(cluster), "several blocks need a (concat) or (avg) qualifier")

    if cluster == "CNN":
        if qualifier == "LSTM":
            fail(qualifier_pos, "LSTM qualifier is only valid for RNN")
        kind = HeadKind.DENSE
    elif cluster == "RNN":
        kind = HeadKind.LSTM if qualifier == "LSTM" else HeadKind.RNN_SKIP
        if qualifier == "LSTM" and many:
            fail(len(cluster) + len("(LSTM)") + len(BLOCK_MARKER) + 1, "LSTM head taps exactly one block")
    elif cluster == "Trans":
        if qualifier is not None:
            fail(qualifier_pos, "Trans takes no qualifier")
        kind = HeadKind.TRANSFORMER
    else:
        if qualifier == "LSTM":
            fail(qualifier_pos, "LSTM qualifier is only valid for RNN")
        kind = HeadKind.SELF_ATTENTION if qualifier in _QUALIFIER_FUSION else HeadKind.PAM_CAM

    fusion = _QUALIFIER_FUSION.get(qualifier or "", FusionModeName.SINGLE)
    try:
        return ArchitectureSpec(
            name=name,
            head=HeadSpec.for_kind(kind, channels=channels, timepoints=timepoints),
            taps=FeatureTapSpec(blocks=blocks),
            fusion=FusionMode(mode=fusion),
            backbone=backbone or BackboneSpec(),
        )
    except ValidationError as error:
        raise ArchitectureNameError(name, len(name), str(error)) from error


def render_arch_name(spec: ArchitectureSpec) -> str:
    """Table name of a spec; inverse of parse_arch_name."""
    kind = spec.head.kind
    fusion = spec.fusion.mode
    digits = "".join(str(b) for b in spec.taps.blocks)
    if kind == HeadKind.DENSE:
        cluster = "CNN"
    elif kind in (HeadKind.RNN_SKIP, HeadKind.LSTM):
        cluster = "RNN"
    elif kind == HeadKind.TRANSFORMER:
        cluster = "Trans"
    else:
        cluster = "Att"

    if kind == HeadKind.LSTM:
        if fusion != FusionModeName.SINGLE:
            raise ValidationError("LSTM heads have no table name with fused taps", target="arch")
        qualifier = "(LSTM)"
    elif fusion == FusionModeName.SINGLE:
        if kind == HeadKind.SELF_ATTENTION:
            raise ValidationError("single-tap self_attention has no table name", target="arch")
        qualifier = ""
    else:
        if kind in (HeadKind.TRANSFORMER, HeadKind.PAM_CAM):
            raise ValidationError(f"{kind.value} heads have no table name with fused taps", target="arch")
        qualifier = f"({_FUSION_QUALIFIER[fusion]})"
    return f"{cluster}{qualifier}{BLOCK_MARKER}{digits}"


def cluster_of(spec: ArchitectureSpec) -> Cluster:
    """Cluster label of the architecture table."""
    return spec.cluster
