"""Exception types shared across the simulator.

Every error carries a short machine-grepable code so the CLI can print
`ERROR:<CODE>: message` and exit nonzero.
"""


class SimError(Exception):
    code = "SIM"


class ConfigurationError(SimError):
    code = "CONFIG"


class TopologyError(SimError):
    code = "TOPOLOGY"


class StateError(SimError):
    code = "STATE"


class ChannelDomainError(SimError, ValueError):
    code = "DOMAIN"


class CsvFormatError(SimError):
    code = "PARSE"
