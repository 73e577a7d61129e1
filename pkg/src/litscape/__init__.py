"""Literature-landscape pipeline: harvest, embed, project, cluster, describe."""

__version__ = "0.1.0"
