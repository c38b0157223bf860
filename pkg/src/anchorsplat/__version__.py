__version__ = "0.3.0"
__checkpoint_format_version__ = 1
