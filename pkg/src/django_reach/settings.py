__author__ = "Thorin Schiffer"

import environ
from django.conf import settings

env = environ.Env()

# LDD store sizing, a smaller node table and cache keep the memory footprint low
NODE_TABLE_SIZE = getattr(settings, "REACH_NODE_TABLE_SIZE", None) or 2 ** 22
CACHE_SIZE = getattr(settings, "REACH_CACHE_SIZE", None) or 2 ** 24
MIN_TABLE_SIZE = 2 ** 18
MAX_TABLE_SIZE = 2 ** 30

# enumeration caps of the interpreter and the checkers
ANY_LIMIT = getattr(settings, "REACH_ANY_LIMIT", None) or 10 ** 6
INIT_LIMIT = getattr(settings, "REACH_INIT_LIMIT", None) or 10 ** 6
STATE_LIMIT = getattr(settings, "REACH_STATE_LIMIT", None) or 10 ** 7
ENUMERATION_LIMIT = getattr(settings, "REACH_ENUMERATION_LIMIT", None) or 10 ** 7

# next-state bridge, the endpoint falls back to the REACH_ENDPOINT environment variable
ENDPOINT = getattr(settings, "REACH_ENDPOINT", None) or env.str("REACH_ENDPOINT", default=None)
CONNECT_TIMEOUT = getattr(settings, "REACH_CONNECT_TIMEOUT", None) or 10.0

WITNESS_LIMIT = getattr(settings, "REACH_WITNESS_LIMIT", None) or 10
