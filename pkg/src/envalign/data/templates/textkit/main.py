import colorama
from tabulate import tabulate

from textkit.stats.freq import top_words
from textkit.tokens import count_words, longest

SAMPLE = "the quick brown fox jumps over the lazy dog the end"


def main():
    colorama.init()
    print(tabulate(top_words(SAMPLE, 3), headers=("word", "count")))
    print("words:", count_words(SAMPLE), "longest:", longest(SAMPLE))


if __name__ == "__main__":
    main()
