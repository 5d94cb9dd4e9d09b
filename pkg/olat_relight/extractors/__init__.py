from olat_relight.core.errors import ConfigError
from olat_relight.extractors.base import FeatureExtractor
from olat_relight.extractors.identity import IdentityExtractor
from olat_relight.extractors.pyramid import PyramidExtractor

EXTRACTORS = {
    IdentityExtractor.name: IdentityExtractor,
    PyramidExtractor.name: PyramidExtractor,
}


def get_extractor(name: str) -> FeatureExtractor:
    """Instantiate a feature extractor by its config name"""
    try:
        return EXTRACTORS[name]()
    except KeyError:
        raise ConfigError(f"Unknown extractor {name!r} (choose from {', '.join(sorted(EXTRACTORS))})")
