from typing import NamedTuple, Literal

from .enums import *
from .errors import *
from ._types import *
from .case_model import *
from .gaussian_core import *
from .attack_independent import *
from .attack_correlated import *
from .detection import *
from .artifact import *
from .runner import *
from .log import *

__author__ = "Snipy7374"
__copyright__ = "2022-present Snipy7374"
__license__ = "MIT"
__version__ = "0.1.0"


class VersionInfo(NamedTuple):
    major: int
    minor: int
    micro: int
    release_level: Literal["alpha", "beta", "final"]

version_info: VersionInfo = VersionInfo(major=0, minor=1, micro=0, release_level="alpha")
