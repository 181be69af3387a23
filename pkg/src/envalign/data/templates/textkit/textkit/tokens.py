def tokenize(text):
    return [word.strip(".,!?").lower() for word in text.split() if word.strip(".,!?")]


def count_words(text):
    return len(tokenize(text))


def longest(text):
    best = ""
    for word in tokenize(text):
        if len(word) > len(best):
            best = word
    return best
