"""Command-line front end, file I/O and test-data synthesis."""

from .io import IOFormatError, load_heightmap, load_image, read_csv_field, save_image, write_csv_field
from .main import CLIError, build_parser, main, run
from .synth import SamplingSpec, add_gaussian_noise, contour_mask, make_sampling_mask, spiral_mask, spiral_path

__all__ = [
    "run",
    "main",
    "build_parser",
    "CLIError",
    "IOFormatError",
    "load_image",
    "save_image",
    "load_heightmap",
    "read_csv_field",
    "write_csv_field",
    "SamplingSpec",
    "add_gaussian_noise",
    "contour_mask",
    "make_sampling_mask",
    "spiral_mask",
    "spiral_path",
]
