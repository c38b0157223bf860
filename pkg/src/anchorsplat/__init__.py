from anchorsplat.cli import cli
from anchorsplat.utils.logging import configure_logging

configure_logging()


__all__ = ['cli']
