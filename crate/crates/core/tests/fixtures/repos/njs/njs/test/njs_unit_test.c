#include "../src/njs_value.h"

int
main(void)
{
    njs_array_t  *array;

    array = njs_array_alloc(4);
    njs_array_destroy(array);

    return 0;
}
