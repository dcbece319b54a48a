"""Tensor-name mapping from source checkpoint naming to the SSMW schema."""
from __future__ import annotations

from dataclasses import dataclass, field


def schema_shapes(config: dict) -> dict[str, tuple[int, ...]]:
    """Required tensor names and shapes for an SSMW checkpoint."""
    d_inner = config["expand"] * config["d_model"]
    shapes: dict[str, tuple[int, ...]] = {}
    for i in range(config["n_layers"]):
        p = f"layers.{i}."
        shapes[p + "in_proj.weight"] = (2 * d_inner, config["d_model"])
        shapes[p + "conv1d.weight"] = (d_inner, config["d_conv"])
        shapes[p + "conv1d.bias"] = (d_inner,)
        shapes[p + "x_proj.weight"] = (config["dt_rank"] + 2 * config["d_state"], d_inner)
        shapes[p + "dt_proj.weight"] = (d_inner, config["dt_rank"])
        shapes[p + "dt_proj.bias"] = (d_inner,)
        shapes[p + "A_log"] = (d_inner, config["d_state"])
        shapes[p + "D"] = (d_inner,)
        shapes[p + "out_proj.weight"] = (config["d_model"], d_inner)
        shapes[p + "norm.weight"] = (config["d_model"],)
    shapes["embedding.weight"] = (config["vocab_size"], config["d_model"])
    shapes["norm_f.weight"] = (config["d_model"],)
    shapes["lm_head.weight"] = (config["vocab_size"], config["d_model"])
    return shapes


# schema template -> source template, "{i}" substituted per layer
MAMBA_LAYER_MAP = (
    ("layers.{i}.in_proj.weight", "backbone.layers.{i}.mixer.in_proj.weight"),
    ("layers.{i}.conv1d.weight", "backbone.layers.{i}.mixer.conv1d.weight"),
    ("layers.{i}.conv1d.bias", "backbone.layers.{i}.mixer.conv1d.bias"),
    ("layers.{i}.x_proj.weight", "backbone.layers.{i}.mixer.x_proj.weight"),
    ("layers.{i}.dt_proj.weight", "backbone.layers.{i}.mixer.dt_proj.weight"),
    ("layers.{i}.dt_proj.bias", "backbone.layers.{i}.mixer.dt_proj.bias"),
    ("layers.{i}.A_log", "backbone.layers.{i}.mixer.A_log"),
    ("layers.{i}.D", "backbone.layers.{i}.mixer.D"),
    ("layers.{i}.out_proj.weight", "backbone.layers.{i}.mixer.out_proj.weight"),
    ("layers.{i}.norm.weight", "backbone.layers.{i}.norm.weight"),
)
MAMBA_TOP_MAP = (
    ("embedding.weight", "backbone.embedding.weight"),
    ("norm_f.weight", "backbone.norm_f.weight"),
    ("lm_head.weight", "lm_head.weight"),
)


@dataclass(frozen=True)
class ExportManifest:
    """How a source checkpoint maps onto the SSMW schema.

    layer_map entries carry an "{i}" placeholder expanded per layer;
    tie_embeddings replaces lm_head with a copy of the embedding table."""

    source_id: str = "mamba"
    layer_map: tuple[tuple[str, str], ...] = MAMBA_LAYER_MAP
    top_map: tuple[tuple[str, str], ...] = MAMBA_TOP_MAP
    tie_embeddings: bool = False

    def resolve(self, n_layers: int) -> dict[str, str]:
        """Full schema-name -> source-name table for a given depth."""
        table: dict[str, str] = {}
        for i in range(n_layers):
            for schema_t, source_t in self.layer_map:
                table[schema_t.format(i=i)] = source_t.format(i=i)
        for schema_name, source_name in self.top_map:
            table[schema_name] = source_name
        if self.tie_embeddings:
            table["lm_head.weight"] = table["embedding.weight"]
        return table
