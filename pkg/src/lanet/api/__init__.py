from lanet.api.forecaster import Forecaster
