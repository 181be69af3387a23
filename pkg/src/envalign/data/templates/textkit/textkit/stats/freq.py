from textkit.tokens import tokenize


def frequencies(text):
    counts = {}
    for word in tokenize(text):
        counts[word] = counts.get(word, 0) + 1
    return counts


def top_words(text, n=2):
    ranked = sorted(frequencies(text).items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:n]
