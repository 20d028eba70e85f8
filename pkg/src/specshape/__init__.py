"""specshape: shape-based rule classification for hyperspectral image cubes."""

from .cube import (EnviFormatError, LabelMap, LabelMapError, SpectralCube,
                   axis_fingerprint, calibrate, read_envi, read_label_map,
                   write_envi, write_label_map)
from .features import (CurvatureSeries, FeaturePoint, FeatureSet, curvature,
                       derivatives, detect_feature_points, features_to_csv)
from .pipeline import (ClassScores, Metrics, PipelineConfig, classify_cube,
                       classify_spectrum, evaluate_metrics, metrics_to_csv,
                       metrics_to_text)
from .preprocess import (Continuum, Spectrum, continuum_remove,
                         read_spectral_library, smooth, upper_convex_hull,
                         write_spectral_library)
from .rules import (Atom, And, CompiledRuleSet, Diagnostic, Or, Rule,
                    RuleBindError, RuleSet, RuleSyntaxError, bind,
                    builtin_rules, evaluate, format_rules, parse_rules)

__version__ = "0.1.0"

__all__ = [
    "And", "Atom", "ClassScores", "CompiledRuleSet", "Continuum",
    "CurvatureSeries", "Diagnostic", "EnviFormatError", "FeaturePoint",
    "FeatureSet", "LabelMap", "LabelMapError", "Metrics", "Or",
    "PipelineConfig", "Rule", "RuleBindError", "RuleSet", "RuleSyntaxError",
    "SpectralCube", "Spectrum", "axis_fingerprint", "bind", "builtin_rules",
    "calibrate", "classify_cube", "classify_spectrum", "continuum_remove",
    "curvature", "derivatives", "detect_feature_points", "evaluate",
    "evaluate_metrics", "features_to_csv", "format_rules", "metrics_to_csv",
    "metrics_to_text", "parse_rules", "read_envi", "read_label_map",
    "read_spectral_library", "smooth", "upper_convex_hull", "write_envi",
    "write_label_map", "write_spectral_library",
]
