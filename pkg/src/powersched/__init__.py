"""Control / transmission-power co-design for networked control under DoS jamming."""

__version__ = "0.1.0"
