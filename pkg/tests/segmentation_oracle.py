"""Offline brute-force touch segmentation; the independent oracle the
online segmenter is checked against."""


def offline_segment_spans(activity, min_active: int, idle_gap: int):
    """Event spans [(first_active, last_active)] from a full activity trace.

    An event needs min_active consecutive active frames to open, extends
    through any later activity, and ends once idle_gap consecutive silent
    frames follow (or the trace ends).
    """
    activity = list(activity)
    n = len(activity)
    events = []
    i = 0
    while i + min_active <= n:
        if all(activity[i : i + min_active]):
            last_active = i + min_active - 1
            silent = 0
            k = last_active + 1
            while k < n and silent < idle_gap:
                if activity[k]:
                    last_active = k
                    silent = 0
                else:
                    silent += 1
                k += 1
            events.append((i, last_active))
            i = k
        else:
            i += 1
    return events
