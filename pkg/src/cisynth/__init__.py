"""SongCi music pipeline: symbolic melody generation, diffusion singing voice,
and token-LM accompaniment, with corpus tooling and objective evaluation."""

__version__ = "0.1.0"
