"""QoE prediction for level-of-detail dynamic meshes and QoE-aware LoD allocation."""

__version__ = "0.1.0"
