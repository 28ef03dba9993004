import os
import math


class Config:
    # Project settings
    NAME = "extreme-inpainting-bench"
    VERSION = "1.0.0"

    # Box masks: width and height drawn independently per axis
    BOX_FRACTION_RANGE = (0.30, 0.70)

    # Free-form brush strokes (lengths and widths are fractions of min(W, H))
    BRUSH_STROKE_COUNT = (1, 4)
    BRUSH_VERTICES = (4, 12)
    BRUSH_SEGMENT_LENGTH = (0.04, 0.15)
    BRUSH_WIDTH = (0.04, 0.15)
    BRUSH_ANGLE_JITTER = math.pi / 4

    # Cellular automata masks
    CA_DOWNSCALE = 4
    CA_STEPS = 3
    CA_INIT_DENSITY = 0.5
    CA_DILATION_RADIUS = 1
    CA_DOWNSCALE_CHOICES = (1, 2, 4, 8)
    CA_STEP_CHOICES = (2, 3, 4, 5)
    CA_RANDOMIZE = True  # genmask draws downscale/steps per mask unless pinned

    # SSIM convention
    SSIM_WINDOW = 11
    SSIM_SIGMA = 1.5
    SSIM_K1 = 0.01
    SSIM_K2 = 0.03
    LUMA_WEIGHTS = (0.299, 0.587, 0.114)

    # Dataset curation
    COVERAGE_THRESHOLD = 0.90
    UNMAPPED_LABEL = 255

    # External metric plug-ins
    PLUGIN_TIMEOUT = 600  # seconds
    PLUGIN_EXCERPT_CHARS = 500

    # Worker pool
    JOBS = os.cpu_count() or 1

    @classmethod
    def log_config(cls):
        """Log current configuration"""
        return {
            "name": cls.NAME,
            "version": cls.VERSION,
            "box_fraction_range": list(cls.BOX_FRACTION_RANGE),
            "ca_downscale": cls.CA_DOWNSCALE,
            "ca_steps": cls.CA_STEPS,
            "ca_init_density": cls.CA_INIT_DENSITY,
            "ca_dilation_radius": cls.CA_DILATION_RADIUS,
            "ca_randomize": cls.CA_RANDOMIZE,
            "ssim": {
                "window": cls.SSIM_WINDOW,
                "sigma": cls.SSIM_SIGMA,
                "k1": cls.SSIM_K1,
                "k2": cls.SSIM_K2,
            },
            "coverage_threshold": cls.COVERAGE_THRESHOLD,
            "unmapped_label": cls.UNMAPPED_LABEL,
        }
