from lanet.api.forecaster import Forecaster
from lanet.config import RunConfig
from lanet.core.domain.forecast import Forecast
from lanet.core.domain.scene import Scene

__all__ = ["Forecaster", "RunConfig", "Forecast", "Scene"]
