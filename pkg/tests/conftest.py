import numpy as np
import pytest

from moocmine.eventlog import ActivityEvent, ActivityType, EventLog

ACT = list(ActivityType)


def make_log(records, catalog=None) -> EventLog:
    """Build an EventLog from (course, learner, activity, timestamp) tuples.

    ``activity`` may be an ActivityType or an index into ActivityType.
    """
    events = []
    for course, learner, act, ts in records:
        if not isinstance(act, ActivityType):
            act = ACT[act % len(ACT)]
        events.append(ActivityEvent(course, learner, act, ts))
    return EventLog.from_events(events, catalog=catalog)


def random_records(rng: np.random.Generator, n, n_learners=5, n_courses=4, t_max=10_000):
    return [
        (
            f"c{int(rng.integers(n_courses))}",
            f"u{int(rng.integers(n_learners))}",
            int(rng.integers(len(ACT))),
            int(rng.integers(t_max)),
        )
        for _ in range(n)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
