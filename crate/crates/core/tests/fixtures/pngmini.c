#include <stddef.h>

static const char *messages[] = {
    "pngmini: invalid chunk length",
    "https://pngmini.example.org/spec",
    "/usr/share/pngmini/palette.conf",
};

static int counter;

int png_read_info(const unsigned char *buf, size_t len)
{
    if (len < 8)
        return -1;
    counter += buf[0];
    return (int)len;
}

const char *png_get_error(int code)
{
    if (code < 0 || code > 2)
        return "pngmini: unknown error";
    return messages[code];
}

static int internal_helper(int x)
{
    return x * 3 + counter;
}

int png_set_level(int level)
{
    return internal_helper(level);
}
