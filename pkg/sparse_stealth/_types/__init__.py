from .grid import *
from .model import *
from .attack import *
from .metrics import *
from .config import *
