import os

from hypothesis import HealthCheck, settings

# property suites run at least a thousand cases each
settings.register_profile("thorough", max_examples=1000, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("NHARQ_HYPOTHESIS", "thorough"))
