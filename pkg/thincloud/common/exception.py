'''Thincloud exceptions.'''

class ThinCloudException(Exception):
    '''User defined exception.'''


class DimensionError(ThinCloudException):
    '''Shape, extent or axis mismatch.'''


class ConfigError(ThinCloudException):
    '''Invalid configuration value.'''


class NumericalError(ThinCloudException):
    '''NaN or Inf produced where finite values are required.'''


class UsageError(ThinCloudException):
    '''Invalid use of an API, e.g. backward from a non-scalar loss.'''


class CheckpointError(ThinCloudException):
    '''Checkpoint cannot be loaded: version, manifest, blob or shape problem.'''


class DataError(ThinCloudException):
    '''Unreadable, unpaired or empty image data.'''
