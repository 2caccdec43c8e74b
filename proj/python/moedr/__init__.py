from ._moedr import *  # noqa: F401,F403
