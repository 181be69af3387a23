def add(a, b):
    return a + b


def clamp(value, low, high):
    if value < low:
        return low
    if value > high:
        return high
    return value


def scale(value, factor=3):
    return value * factor


def mean(values):
    if len(values) == 0:
        return 0
    return sum(values) / len(values)
